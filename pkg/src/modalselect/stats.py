"""Bound reports, prophet ratios and diagnostics for the two variance/CLT conjectures."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats as sps

from .errors import ConfigurationError, DomainError

DEFAULT_C_SLACK = 5.0
KS_THRESHOLD = 0.05
THIRD_BAND = (0.30, 0.37)


def combined_stderr(stderr_mean: float, stderr_var: float) -> float:
    return math.hypot(stderr_mean, stderr_var)


def clt_statistic(lengths, n: int, d: int) -> np.ndarray:
    """``sqrt(3) (U - sqrt(c n)) / (c n)^(1/4)`` with ``c = 2 (d + 1)``, per length ``U``."""
    u = np.asarray(lengths, dtype=float)
    if u.size == 0:
        raise DomainError("clt_statistic needs at least one length")
    cn = 2.0 * (d + 1) * n
    return math.sqrt(3.0) * (u - math.sqrt(cn)) / cn**0.25


def _moments(z: np.ndarray) -> tuple[float, float, float, float]:
    mean = float(z.mean())
    var = float(z.var(ddof=1)) if z.size > 1 else 0.0
    if z.size < 2 or np.ptp(z) == 0:
        # degenerate samples report zero shape moments
        return mean, var, 0.0, 0.0
    return mean, var, float(sps.skew(z)), float(sps.kurtosis(z))


def clt_moments(lengths, n: int, d: int) -> tuple[float, float, float, float]:
    """Mean, variance, skewness and excess kurtosis of the normalised lengths."""
    return _moments(clt_statistic(lengths, n, d))


@dataclass(frozen=True)
class CltSummary:
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float
    ks_distance: float
    ks_distance_jittered: float

    @property
    def looks_normal(self) -> bool:
        return self.ks_distance < KS_THRESHOLD


def clt_summary(lengths, n: int, d: int, seed: int = 0) -> CltSummary:
    """Moments and KS distances to N(0, 1) of the normalised lengths.

    Lengths are integers, so the raw KS distance carries a lattice floor of
    roughly ``0.2 * sqrt(3) / (c n)^(1/4)``.  ``ks_distance_jittered`` adds a
    seeded Uniform(-1/2, 1/2) to each length first, removing that floor.
    """
    z = clt_statistic(lengths, n, d)
    ks = float(sps.kstest(z, "norm").statistic)
    rng = np.random.Generator(np.random.Philox(key=seed))
    u = np.asarray(lengths, dtype=float) + rng.uniform(-0.5, 0.5, len(z))
    ks_j = float(sps.kstest(clt_statistic(u, n, d), "norm").statistic)
    return CltSummary(*_moments(z), ks_distance=ks, ks_distance_jittered=ks_j)


@dataclass
class BoundReport:
    n: int
    d: int
    policy: str
    solver_value: float
    upper_bound: float
    lower_bound: float
    c_slack: float
    mc_mean: float
    mc_variance: float
    mc_stderr: float
    mc_variance_stderr: float
    var_over_mean: float
    offline_mean: float
    prophet_ratio: float
    clt_moments: tuple
    ks_distance: float
    ks_distance_jittered: float
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        out = asdict(self)
        out["clt_moments"] = dict(zip(("mean", "variance", "skewness", "excess_kurtosis"),
                                      self.clt_moments))
        out["passed"] = self.passed
        return out


def bound_report(vt, online, offline_mean: float, c_slack: float = DEFAULT_C_SLACK) -> BoundReport:
    """Compare solver value, Monte Carlo batch and prophet mean against the bounds."""
    from .bellman import lower_bound, upper_bound

    spec = vt.spec
    if (online.spec.n, online.spec.d) != (spec.n, spec.d):
        raise ConfigurationError(
            f"batch is for (n={online.spec.n}, d={online.spec.d}), table for (n={spec.n}, d={spec.d})")
    upper = upper_bound(spec.n, spec.d)
    lower = lower_bound(spec.n, spec.d, c_slack)
    value = vt.v0
    violations = []
    if not value < upper:
        violations.append("upper_bound")
    if not value > lower:
        violations.append("lower_bound")
    slack = 3.0 * combined_stderr(online.stderr_mean, online.variance_stderr)
    if online.policy == "optimal" and online.sample_variance > online.sample_mean + slack:
        violations.append("variance_bound")
    mean = online.sample_mean
    clt = clt_summary(online.lengths, spec.n, spec.d)
    return BoundReport(
        n=spec.n,
        d=spec.d,
        policy=online.policy,
        solver_value=value,
        upper_bound=upper,
        lower_bound=lower,
        c_slack=c_slack,
        mc_mean=mean,
        mc_variance=online.sample_variance,
        mc_stderr=online.stderr_mean,
        mc_variance_stderr=online.variance_stderr,
        var_over_mean=online.sample_variance / mean if mean > 0 else 0.0,
        offline_mean=float(offline_mean),
        prophet_ratio=float(offline_mean) / mean if mean > 0 else math.inf,
        clt_moments=(clt.mean, clt.variance, clt.skewness, clt.excess_kurtosis),
        ks_distance=clt.ks_distance,
        ks_distance_jittered=clt.ks_distance_jittered,
        violations=violations,
    )


def conjecture_report(online, resamples: int = 1000, seed: int = 0, min_reps: int = 1000) -> dict:
    """Variance-to-mean ratio with a percentile bootstrap interval, plus the attached variance checks."""
    if online.reps < min_reps:
        raise DomainError(f"conjecture_report needs at least {min_reps} runs, got {online.reps}")
    lengths = np.asarray(online.lengths, dtype=float)
    mean = float(lengths.mean())
    var = float(lengths.var(ddof=1))
    ratio = var / mean if mean > 0 else 0.0

    rng = np.random.Generator(np.random.Philox(key=seed))
    ratios = np.empty(resamples)
    for r in range(resamples):
        sample = lengths[rng.integers(0, len(lengths), len(lengths))]
        m = sample.mean()
        ratios[r] = sample.var(ddof=1) / m if m > 0 else 0.0
    lo, hi = (float(q) for q in np.percentile(ratios, [2.5, 97.5]))
    consistent = var > 0 and lo <= THIRD_BAND[1] and hi >= THIRD_BAND[0]

    slack = 3.0 * combined_stderr(online.stderr_mean, online.variance_stderr)
    report = {
        "n": online.spec.n,
        "d": online.spec.d,
        "reps": online.reps,
        "var_over_mean": ratio,
        "ci_low": lo,
        "ci_high": hi,
        "bootstrap_resamples": resamples,
        "bootstrap_seed": seed,
        "consistent_with_one_third": bool(consistent),
        "variance_at_most_mean": bool(var <= mean + slack),
        "monotone_variance_lower_bound": None,
    }
    if online.spec.d == 0:
        report["monotone_variance_lower_bound"] = bool(var + slack > mean / 3.0 - 2.0)
    return report


REPORT_CSV_FIELDS = (
    "n", "d", "policy", "solver_value", "upper_bound", "lower_bound", "c_slack",
    "mc_mean", "mc_variance", "mc_stderr", "var_over_mean", "offline_mean",
    "prophet_ratio", "ks_distance", "passed",
)


def write_report_csv(reports, path) -> None:
    """One fixed-precision row per ``(n, d, policy)``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_CSV_FIELDS)
        for rep in reports:
            row = []
            for name in REPORT_CSV_FIELDS:
                value = getattr(rep, name)
                if isinstance(value, float):
                    row.append(f"{value:.6f}")
                else:
                    row.append(value)
            writer.writerow(row)
