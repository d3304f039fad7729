"""Backward induction for sequential d-modal subsequence selection.

The state before observation ``i`` is the last selected value ``s`` and the
index ``k`` of the monotone block currently being built.  Block 0 increases,
block 1 decreases, and so on; even blocks go up, odd blocks go down.  A
selection on the "wrong" side of ``s`` is a turn and moves to block ``k + 1``.
No turn is possible once ``k == d``.

Value rows live on the uniform grid ``s_j = j / (m - 1)`` and are treated as
piecewise-linear functions of ``s``.  Each Bellman update integrates that
interpolant exactly, so the solver and the threshold search see the same
function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, StateError

#: Absolute tolerance in ``x`` for threshold location.  Crossings are solved
#: in closed form inside the bracketing grid cell, so the realised error is
#: at the level of floating point round-off.
TOL_X = 1e-9
#: Value comparisons are loosened by this amount so indifference resolves
#: toward the larger acceptance interval.
TOL_V = 1e-12


@dataclass(frozen=True)
class ProblemSpec:
    """One selection problem: horizon ``n``, turn budget ``d``, grid size ``m``."""

    n: int
    d: int
    grid_size: int = 2001

    def __post_init__(self):
        for name in ("n", "d", "grid_size"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise DomainError(f"{name} must be an integer, got {value!r}")
        if self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}")
        if self.d < 0:
            raise DomainError(f"d must be >= 0, got {self.d}")
        if self.grid_size < 2:
            raise DomainError(f"grid_size must be >= 2, got {self.grid_size}")

    @property
    def m(self) -> int:
        return self.grid_size

    @property
    def step(self) -> float:
        return 1.0 / (self.grid_size - 1)

    @cached_property
    def grid(self) -> np.ndarray:
        return np.arange(self.grid_size) / (self.grid_size - 1)

    def check_block(self, k: int) -> None:
        if not 0 <= k <= self.d:
            raise DomainError(f"block index {k} outside 0..{self.d}")


def is_increasing_block(k) -> bool:
    return k % 2 == 0


# --------------------------------------------------------------------------
# grid helpers


def _cell_position(s, m: int):
    """Cell index ``j`` and offset ``t`` in [0, 1] locating ``s`` on the grid.

    Positions within 1e-9 of a grid node snap onto it so that lookups at
    grid points return stored values bit-exactly.
    """
    pos = np.asarray(s, dtype=float) * (m - 1)
    nearest = np.rint(pos)
    pos = np.where(np.abs(pos - nearest) < 1e-9, nearest, pos)
    j = np.clip(np.floor(pos).astype(np.int64), 0, m - 2)
    return j, pos - j


def interpolate(row: np.ndarray, s):
    """Evaluate the piecewise-linear interpolant of ``row`` at ``s``."""
    j, t = _cell_position(s, row.shape[-1])
    left = row[j]
    return left + t * (row[j + 1] - left)


def cumulative_integral(row: np.ndarray, h: float) -> np.ndarray:
    """Trapezoid integrals of the interpolant from 0 to each grid node."""
    out = np.empty_like(row)
    out[0] = 0.0
    np.cumsum(0.5 * h * (row[1:] + row[:-1]), out=out[1:])
    return out


def _integral_to(row: np.ndarray, cum: np.ndarray, x, h: float):
    """Exact integral of the interpolant of ``row`` over [0, x]."""
    j, t = _cell_position(x, row.shape[-1])
    left = row[j]
    return cum[j] + h * t * (left + 0.5 * t * (row[j + 1] - left))


def _lower_crossing(g: np.ndarray, level: np.ndarray, grid: np.ndarray, h: float):
    """``inf{x <= s_j : g(x) >= level_j}`` for a non-decreasing row ``g``.

    Returns ``s_j`` itself when even ``g(s_j)`` falls short, i.e. when the
    branch below ``s_j`` is never worth taking.
    """
    g = np.maximum.accumulate(g)
    thr = level - TOL_V
    idx = np.searchsorted(g, thr, side="left")
    inner = np.clip(idx, 1, len(g) - 1)
    lo = g[inner - 1]
    hi = g[inner]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = grid[inner - 1] + h * (thr - lo) / (hi - lo)
    x = np.where(idx == 0, 0.0, x)
    empty = g < thr
    return np.where(empty, grid, np.minimum(x, grid))


def _upper_crossing(g: np.ndarray, level: np.ndarray, grid: np.ndarray, h: float):
    """``sup{x >= s_j : g(x) >= level_j}`` for a non-increasing row ``g``.

    Returns ``s_j`` when ``g(s_j)`` already falls short.
    """
    g = np.minimum.accumulate(g)
    thr = level - TOL_V
    last = np.searchsorted(-g, -thr, side="right") - 1
    inner = np.clip(last, 0, len(g) - 2)
    lo = g[inner]
    hi = g[inner + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = grid[inner] + h * (lo - thr) / (lo - hi)
    x = np.where(last >= len(g) - 1, 1.0, x)
    empty = g < thr
    return np.where(empty, grid, np.maximum(x, grid))


def _row_thresholds(nxt: np.ndarray, k: int, d: int, grid: np.ndarray, h: float):
    """Acceptance interval endpoints for block ``k`` given next-step values.

    ``nxt`` has shape ``(d + 1, m)`` and holds ``v_{i+1}(., k)`` per block.
    """
    stay = nxt[k]
    if is_increasing_block(k):
        b = _upper_crossing(1.0 + nxt[k], stay, grid, h)
        a = _lower_crossing(1.0 + nxt[k + 1], stay, grid, h) if k < d else grid.copy()
    else:
        a = _lower_crossing(1.0 + nxt[k], stay, grid, h)
        b = _upper_crossing(1.0 + nxt[k + 1], stay, grid, h) if k < d else grid.copy()
    return a, b


def _branch_rows(k: int, d: int):
    """Block index reached by accepting below / above ``s`` (None if barred)."""
    if is_increasing_block(k):
        return (k + 1 if k < d else None), k
    return k, (k + 1 if k < d else None)


# --------------------------------------------------------------------------
# public API


def terminal_values(spec: ProblemSpec, s: float, k: int) -> float:
    """Value with a single observation left: ``v_n(s, k)``."""
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"s={s} outside [0, 1]")
    spec.check_block(k)
    if k < spec.d:
        return 1.0
    return 1.0 - s if is_increasing_block(spec.d) else s


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Solved values; ``values[i - 1, k, j]`` is ``v_i(s_j, k)`` for ``i = 1..n+1``."""

    spec: ProblemSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        shape = (self.spec.n + 1, self.spec.d + 1, self.spec.m)
        if self.values.shape != shape:
            raise DomainError(f"value array has shape {self.values.shape}, expected {shape}")
        self.values.setflags(write=False)

    def row(self, i: int, k: int) -> np.ndarray:
        return self.values[i - 1, k]

    @property
    def v0(self) -> float:
        """Optimal expected number of selections from the start, ``v_1(0, 0)``."""
        return float(self.values[0, 0, 0])

    def value_many(self, i: int, s, k):
        """Vectorised :func:`value_at` over arrays of states at a common time."""
        rows = self.values[i - 1]
        j, t = _cell_position(s, self.spec.m)
        left = rows[k, j]
        return left + t * (rows[k, j + 1] - left)


def value_at(vt: ValueTable, i: int, s: float, k: int) -> float:
    """Linear interpolation of ``v_i(., k)`` at ``s``."""
    spec = vt.spec
    if not 1 <= i <= spec.n + 1:
        raise DomainError(f"time index {i} outside 1..{spec.n + 1}")
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"s={s} outside [0, 1]")
    spec.check_block(k)
    return float(interpolate(vt.row(i, k), s))


def solve_value_table(spec: ProblemSpec) -> ValueTable:
    """Fill ``v_i(s, k)`` for ``i = n+1`` down to 1 by backward induction.

    For each state the max in the Bellman integrand switches once, at the
    acceptance threshold, so the update is

        v_i = V (1 - (b - a)) + (b - a) + int_a^s v_{i+1}(x, k_lo) dx
                                        + int_s^b v_{i+1}(x, k_hi) dx

    with ``V = v_{i+1}(s, k)`` and ``k_lo``/``k_hi`` the blocks reached by
    accepting below/above ``s``.
    """
    n, d, m = spec.n, spec.d, spec.m
    grid, h = spec.grid, spec.step
    values = np.zeros((n + 1, d + 1, m))
    for i in range(n, 0, -1):
        nxt = values[i]
        cum = np.array([cumulative_integral(r, h) for r in nxt])
        out = values[i - 1]
        for k in range(d + 1):
            a, b = _row_thresholds(nxt, k, d, grid, h)
            stay = nxt[k]
            width = b - a
            total = stay * (1.0 - width) + width
            lo, hi = _branch_rows(k, d)
            if lo is not None:
                total += _integral_to(nxt[lo], cum[lo], grid, h) - _integral_to(nxt[lo], cum[lo], a, h)
            if hi is not None:
                total += _integral_to(nxt[hi], cum[hi], b, h) - _integral_to(nxt[hi], cum[hi], grid, h)
            out[k] = total
    return ValueTable(spec, values)


@dataclass(frozen=True, eq=False)
class ThresholdTable:
    """Acceptance intervals ``[a, b]``; ``a[i - 1, k, j]`` is ``a(i, s_j, k)`` for ``i = 1..n``."""

    spec: ProblemSpec
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    def __post_init__(self):
        shape = (self.spec.n, self.spec.d + 1, self.spec.m)
        for name in ("a", "b"):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise DomainError(f"{name} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)

    def interval_many(self, i: int, s, k):
        """Interpolated ``(a, b)`` at time ``i`` for arrays of ``(s, k)``."""
        j, t = _cell_position(s, self.spec.m)
        a_rows = self.a[i - 1]
        b_rows = self.b[i - 1]
        a0 = a_rows[k, j]
        b0 = b_rows[k, j]
        return a0 + t * (a_rows[k, j + 1] - a0), b0 + t * (b_rows[k, j + 1] - b0)

    def interval(self, i: int, s: float, k: int) -> tuple[float, float]:
        if not 1 <= i <= self.spec.n:
            raise DomainError(f"time index {i} outside 1..{self.spec.n}")
        self.spec.check_block(k)
        a, b = self.interval_many(i, np.float64(s), np.int64(k))
        return float(a), float(b)


def compute_thresholds(vt: ValueTable) -> ThresholdTable:
    """Indifference thresholds ``a(i, s, k) <= s <= b(i, s, k)`` for every grid state."""
    if not isinstance(vt, ValueTable):
        raise StateError("compute_thresholds needs a solved ValueTable")
    spec = vt.spec
    if np.any(vt.values[spec.n] != 0.0):
        raise StateError("value table is not solved: v_{n+1} must vanish")
    n, d = spec.n, spec.d
    a = np.empty((n, d + 1, spec.m))
    b = np.empty_like(a)
    for i in range(1, n + 1):
        nxt = vt.values[i]
        for k in range(d + 1):
            a[i - 1, k], b[i - 1, k] = _row_thresholds(nxt, k, d, spec.grid, spec.step)
    return ThresholdTable(spec, a, b)


def solve(spec: ProblemSpec) -> tuple[ValueTable, ThresholdTable]:
    vt = solve_value_table(spec)
    return vt, compute_thresholds(vt)


def upper_bound(n: int, d: int) -> float:
    """Strict upper bound ``sqrt(2 (d + 1) n)`` on the optimal mean."""
    return float(np.sqrt(2.0 * (d + 1) * n))


def lower_bound(n: int, d: int, c_slack: float = 5.0) -> float:
    """Lower bound on the optimal mean with the additive O(1) set to ``c_slack``."""
    c = 2.0 * (d + 1)
    return float(np.sqrt(c * n) - c**0.75 * np.sqrt(np.pi / 3.0) * n**0.25 - c_slack)
