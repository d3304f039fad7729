"""Executable selection policies.

Both policies expose a vectorised ``step(i, s, k, x)`` that advances many
independent runs through observation ``i`` at once; the scalar helpers
:func:`optimal_accept` and :func:`heuristic_window_accept` go through the
same code so single-run and batch results agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .bellman import ProblemSpec, ThresholdTable
from .errors import DomainError, ExhaustedHorizonError


@dataclass(frozen=True)
class ChooserState:
    """State before observation ``i``: last selected value, block index, selections so far."""

    i: int = 1
    s: float = 0.0
    k: int = 0
    count: int = 0


@dataclass(frozen=True)
class Decision:
    accepted: bool
    new_state: ChooserState
    interval: tuple[float, float]


@dataclass(frozen=True)
class StepResult:
    """Outcome of one vectorised step across runs."""

    accepted: np.ndarray
    a: np.ndarray
    b: np.ndarray
    s: np.ndarray
    k: np.ndarray


class OptimalPolicy:
    """Accept ``x`` iff it falls in the optimal interval ``[a(i, s, k), b(i, s, k)]``.

    With ``reflect=True`` observations are mapped through ``x -> 1 - x``
    first, which turns the up-first chooser into a down-first one.
    """

    name = "optimal"

    def __init__(self, tt: ThresholdTable, reflect: bool = False):
        self.tt = tt
        self.spec = tt.spec
        self.reflect = reflect

    def step(self, i: int, s, k, x) -> StepResult:
        a, b = self.tt.interval_many(i, s, k)
        accepted = (x >= a) & (x <= b)
        turning = np.where(k % 2 == 0, x < s, x > s)
        return StepResult(
            accepted=accepted,
            a=a,
            b=b,
            s=np.where(accepted, x, s),
            k=k + (accepted & turning),
        )


class WindowPolicy:
    """Split-window heuristic: ``d + 1`` fixed phases of ``floor(n / (d + 1))`` steps.

    Increasing phases start from ``s = 0`` and accept ``x`` in
    ``[s, min(1, s + w)]``; decreasing phases start from ``s = 1`` and accept
    ``x`` in ``[max(0, s - w), s]``, with ``w = sqrt(2 (d + 1) / n)``.
    Leftover observations after the last phase are rejected.
    """

    name = "heuristic"
    reflect = False

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        self.phase_length = spec.n // (spec.d + 1)
        self.width = math.sqrt(2.0 * (spec.d + 1) / spec.n)

    def phase(self, i: int) -> int:
        if self.phase_length == 0:
            return self.spec.d + 1
        return (i - 1) // self.phase_length

    def step(self, i: int, s, k, x) -> StepResult:
        p = self.phase(i)
        if p > self.spec.d:
            s = np.asarray(s, dtype=float)
            return StepResult(
                accepted=np.zeros(np.shape(x), dtype=bool),
                a=s,
                b=s,
                s=s,
                k=np.asarray(k),
            )
        if p > 0 and i - 1 == p * self.phase_length:
            s = np.full(np.shape(x), 0.0 if p % 2 == 0 else 1.0)
            k = np.full(np.shape(x), p, dtype=np.int64)
        if p % 2 == 0:
            a = s
            b = np.minimum(1.0, s + self.width)
        else:
            a = np.maximum(0.0, s - self.width)
            b = s
        accepted = (x >= a) & (x <= b)
        return StepResult(accepted=accepted, a=a, b=b, s=np.where(accepted, x, s), k=k)


def _scalar_step(policy, state: ChooserState, x: float) -> Decision:
    if state.i > policy.spec.n:
        raise ExhaustedHorizonError(f"no observation left after time {policy.spec.n}")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x={x} outside [0, 1]")
    if policy.reflect:
        x = 1.0 - x
    res = policy.step(
        state.i,
        np.array([state.s]),
        np.array([state.k], dtype=np.int64),
        np.array([x]),
    )
    accepted = bool(res.accepted[0])
    new_state = replace(
        state,
        i=state.i + 1,
        s=float(res.s[0]),
        k=int(res.k[0]),
        count=state.count + accepted,
    )
    return Decision(accepted, new_state, (float(res.a[0]), float(res.b[0])))


def optimal_accept(tt: ThresholdTable, state: ChooserState, x: float) -> Decision:
    return _scalar_step(OptimalPolicy(tt), state, x)


def heuristic_window_accept(spec: ProblemSpec, state: ChooserState, x: float) -> Decision:
    return _scalar_step(WindowPolicy(spec), state, x)
