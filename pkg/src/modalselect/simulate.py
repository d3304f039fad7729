"""Monte Carlo runs of selection policies on i.i.d. uniform streams.

Streams are reproducible.  Run ``j`` of a batch with base seed ``B`` uses
the 64-bit seed ``derive_seed(B, j)``: the first word of
``numpy.random.SeedSequence(B, spawn_key=(j,))``.  That seed is the key of
a Philox-4x64 counter-based generator whose first ``n`` doubles are the
observations.  Runs are therefore independent of batch chunking and of
how many workers execute them.

Along every run the engine tracks ``Y_i = count_i + v_{i+1}(S_i, K_i)``;
under the optimal policy this is a martingale starting at ``v_1(0, 0)``
and ending at the number of selections.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bellman import ProblemSpec, ValueTable
from .errors import ConfigurationError, DomainError, UnsupportedError
from .stats import clt_moments

MASK64 = (1 << 64) - 1
TRAJECTORY_COLUMNS = ("step", "x", "a", "b", "accepted", "s", "k", "y", "d_inc")


def derive_seed(base_seed: int, j: int) -> int:
    ss = np.random.SeedSequence(int(base_seed) & MASK64, spawn_key=(int(j),))
    return int(ss.generate_state(1, np.uint64)[0])


def uniform_stream(seed: int, n: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=int(seed) & MASK64))
    return gen.random(n)


def grid_slack(spec: ProblemSpec) -> float:
    """Allowed overshoot of ``|d_i| <= 1`` caused by discretisation."""
    return 2.0 * spec.step


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One run; per-step arrays are indexed by step ``i - 1``."""

    spec: ProblemSpec
    seed: int | None
    x: np.ndarray
    a: np.ndarray
    b: np.ndarray
    accepted: np.ndarray
    s: np.ndarray
    k: np.ndarray
    y: np.ndarray
    d_inc: np.ndarray
    y0: float

    @property
    def final_length(self) -> int:
        return int(self.accepted.sum())

    @property
    def selected(self) -> np.ndarray:
        return self.x[self.accepted]

    def steps(self):
        for i in range(len(self.x)):
            yield {
                "step": i + 1,
                "x": float(self.x[i]),
                "a": float(self.a[i]),
                "b": float(self.b[i]),
                "accepted": bool(self.accepted[i]),
                "s": float(self.s[i]),
                "k": int(self.k[i]),
                "y": float(self.y[i]),
                "d_inc": float(self.d_inc[i]),
            }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=TRAJECTORY_COLUMNS)
            writer.writeheader()
            for rec in self.steps():
                rec["accepted"] = int(rec["accepted"])
                for key in ("x", "a", "b", "s", "y", "d_inc"):
                    rec[key] = repr(rec[key])
                writer.writerow(rec)


def _check_inputs(policy, spec: ProblemSpec, vt: ValueTable | None) -> None:
    if policy.spec != spec:
        raise ConfigurationError(f"policy built for {policy.spec}, run requested for {spec}")
    if vt is not None and vt.spec != spec:
        raise ConfigurationError(f"value table built for {vt.spec}, run requested for {spec}")
    if vt is None and policy.name == "optimal":
        raise ConfigurationError("the optimal policy needs its value table for the martingale")


def _engine(policy, spec: ProblemSpec, vt: ValueTable | None, xs: np.ndarray, record: bool):
    """Advance ``len(xs)`` runs in lock step; returns per-run arrays (and per-step ones)."""
    reps, n = xs.shape
    if n != spec.n:
        raise ConfigurationError(f"stream length {n} does not match horizon {spec.n}")
    if policy.reflect:
        xs = 1.0 - xs
    s = np.zeros(reps)
    k = np.zeros(reps, dtype=np.int64)
    count = np.zeros(reps, dtype=np.int64)
    y0 = vt.v0 if vt is not None else 0.0
    y_prev = np.full(reps, y0)
    sum_sq = np.zeros(reps)
    sum_d2 = np.zeros(reps)
    max_abs_d = np.zeros(reps)
    # independent feasibility bookkeeping: monotone runs among selected values
    last_sel = np.full(reps, np.nan)
    direction = np.ones(reps, dtype=np.int64)
    blocks = np.ones(reps, dtype=np.int64)

    steps = None
    if record:
        steps = {name: np.empty((reps, n)) for name in ("a", "b", "s", "y", "d_inc")}
        steps["accepted"] = np.empty((reps, n), dtype=bool)
        steps["k"] = np.empty((reps, n), dtype=np.int64)

    for i in range(1, n + 1):
        x = xs[:, i - 1]
        res = policy.step(i, s, k, x)
        acc = res.accepted
        count += acc

        sign = np.where(x > last_sel, 1, -1)
        change = acc & ~np.isnan(last_sel) & (sign != direction)
        blocks += change
        direction = np.where(change, sign, direction)
        last_sel = np.where(acc, x, last_sel)

        s, k = res.s, res.k
        if vt is not None:
            y = count + vt.value_many(i + 1, s, k)
        else:
            y = count.astype(float)
        d_inc = y - y_prev
        y_prev = y
        width = res.b - res.a
        sum_sq += width * width
        sum_d2 += d_inc * d_inc
        np.maximum(max_abs_d, np.abs(d_inc), out=max_abs_d)

        if record:
            steps["a"][:, i - 1] = res.a
            steps["b"][:, i - 1] = res.b
            steps["s"][:, i - 1] = s
            steps["y"][:, i - 1] = y
            steps["d_inc"][:, i - 1] = d_inc
            steps["accepted"][:, i - 1] = acc
            steps["k"][:, i - 1] = k

    g_terminal = np.where(k == 0, s, 2.0 - s) if spec.d == 1 else np.full(reps, np.nan)
    runs = {
        "length": count,
        "sum_sq": sum_sq,
        "sum_d_sq": sum_d2,
        "max_abs_d": max_abs_d,
        "g_terminal": g_terminal,
        "blocks": blocks,
        "final_k": k,
        "final_s": s,
    }
    return runs, steps, xs


def run_trajectory(policy, spec: ProblemSpec, vt: ValueTable | None, seed: int | None = None,
                   stream=None) -> Trajectory:
    """Run one trajectory on ``uniform_stream(seed, n)`` or on an injected stream."""
    _check_inputs(policy, spec, vt)
    if stream is None:
        if seed is None:
            raise DomainError("give either a seed or an injected stream")
        stream = uniform_stream(seed, spec.n)
    xs = np.asarray(stream, dtype=float).reshape(1, -1)
    if np.any((xs < 0.0) | (xs > 1.0)):
        raise DomainError("stream values must lie in [0, 1]")
    _, steps, xs = _engine(policy, spec, vt, xs, record=True)
    return Trajectory(
        spec=spec,
        seed=seed,
        x=xs[0],
        y0=vt.v0 if vt is not None else 0.0,
        **{name: arr[0] for name, arr in steps.items()},
    )


def telescoping_statistic(trajectory: Trajectory) -> tuple[float, float]:
    """``(sum of squared interval widths, g(S_n, R_n))`` for a unimodal run.

    ``g(s, 0) = s`` and ``g(s, 1) = 2 - s``.
    """
    if trajectory.spec.d != 1:
        raise UnsupportedError("the bookkeeping function g is only defined for d = 1")
    width = trajectory.b - trajectory.a
    s_n = float(trajectory.s[-1])
    g = s_n if int(trajectory.k[-1]) == 0 else 2.0 - s_n
    return float(np.sum(width * width)), g


def _stderr(values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(len(values)))


def variance_stderr(values: np.ndarray) -> float:
    """Large-sample standard error of the sample variance."""
    r = len(values)
    if r < 2:
        return 0.0
    centred = values - values.mean()
    m2 = np.mean(centred**2)
    m4 = np.mean(centred**4)
    return float(np.sqrt(max(m4 - m2 * m2, 0.0) / r))


@dataclass(frozen=True, eq=False)
class BatchSummary:
    spec: ProblemSpec
    policy: str
    base_seed: int
    reps: int
    sample_mean: float
    sample_variance: float
    stderr_mean: float
    variance_stderr: float
    telescoping_mean: float
    telescoping_stderr: float
    g_terminal_mean: float | None
    g_terminal_stderr: float | None
    mean_sum_d_sq: float
    max_abs_d: float
    all_feasible: bool
    clt_moments: tuple[float, float, float, float]
    runs: dict = field(repr=False)

    @classmethod
    def from_runs(cls, spec: ProblemSpec, policy: str, base_seed: int, runs: dict) -> "BatchSummary":
        lengths = runs["length"].astype(float)
        reps = len(lengths)
        unimodal = spec.d == 1
        return cls(
            spec=spec,
            policy=policy,
            base_seed=base_seed,
            reps=reps,
            sample_mean=float(lengths.mean()),
            sample_variance=float(lengths.var(ddof=1)) if reps > 1 else 0.0,
            stderr_mean=_stderr(lengths),
            variance_stderr=variance_stderr(lengths),
            telescoping_mean=float(runs["sum_sq"].mean()),
            telescoping_stderr=_stderr(runs["sum_sq"]),
            g_terminal_mean=float(runs["g_terminal"].mean()) if unimodal else None,
            g_terminal_stderr=_stderr(runs["g_terminal"]) if unimodal else None,
            mean_sum_d_sq=float(runs["sum_d_sq"].mean()),
            max_abs_d=float(runs["max_abs_d"].max()),
            all_feasible=bool(np.all(runs["blocks"] <= spec.d + 1)),
            clt_moments=clt_moments(runs["length"], spec.n, spec.d),
            runs=runs,
        )

    @property
    def lengths(self) -> np.ndarray:
        return self.runs["length"]

    def martingale_bound_holds(self) -> bool:
        return self.max_abs_d <= 1.0 + grid_slack(self.spec)

    def to_dict(self, include_lengths: bool = True) -> dict:
        out = {
            "spec": {"n": self.spec.n, "d": self.spec.d, "grid_size": self.spec.grid_size},
            "policy": self.policy,
            "base_seed": self.base_seed,
            "seed_rule": "philox64(SeedSequence(base_seed, spawn_key=(j,)).generate_state(1, uint64)[0])",
            "reps": self.reps,
            "sample_mean": self.sample_mean,
            "sample_variance": self.sample_variance,
            "stderr_mean": self.stderr_mean,
            "variance_stderr": self.variance_stderr,
            "telescoping_mean": self.telescoping_mean,
            "telescoping_stderr": self.telescoping_stderr,
            "g_terminal_mean": self.g_terminal_mean,
            "g_terminal_stderr": self.g_terminal_stderr,
            "mean_sum_d_sq": self.mean_sum_d_sq,
            "max_abs_d": self.max_abs_d,
            "martingale_bound_ok": self.martingale_bound_holds(),
            "all_feasible": self.all_feasible,
            "clt_moments": dict(zip(("mean", "variance", "skewness", "excess_kurtosis"),
                                    self.clt_moments)),
        }
        if include_lengths:
            out["lengths"] = [int(v) for v in self.lengths]
        return out


def run_batch(policy, spec: ProblemSpec, vt: ValueTable | None, reps: int, base_seed: int,
              workers: int = 1, chunk: int = 2048) -> BatchSummary:
    """Run ``reps`` independent trajectories and aggregate them."""
    if reps < 1:
        raise DomainError(f"reps must be >= 1, got {reps}")
    _check_inputs(policy, spec, vt)
    bounds = [(lo, min(lo + chunk, reps)) for lo in range(0, reps, chunk)]

    def work(span):
        lo, hi = span
        xs = np.stack([uniform_stream(derive_seed(base_seed, j), spec.n) for j in range(lo, hi)])
        runs, _, _ = _engine(policy, spec, vt, xs, record=False)
        return runs

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(span) for span in bounds]
    runs = {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}
    return BatchSummary.from_runs(spec, policy.name, int(base_seed), runs)


def record_batch(policy, spec: ProblemSpec, vt: ValueTable | None, reps: int, base_seed: int):
    """Like :func:`run_batch` but also returns the ``(reps, n)`` step arrays."""
    if reps < 1:
        raise DomainError(f"reps must be >= 1, got {reps}")
    _check_inputs(policy, spec, vt)
    xs = np.stack([uniform_stream(derive_seed(base_seed, j), spec.n) for j in range(reps)])
    runs, steps, xs = _engine(policy, spec, vt, xs, record=True)
    steps["x"] = xs
    return BatchSummary.from_runs(spec, policy.name, int(base_seed), runs), steps
