"""Optimal on-line selection of unimodal and d-modal subsequences."""

__version__ = "0.1.0"

from .bellman import (
    ProblemSpec,
    ThresholdTable,
    ValueTable,
    compute_thresholds,
    lower_bound,
    solve,
    solve_value_table,
    terminal_values,
    upper_bound,
    value_at,
)
from .offline import (
    chung_guaranteed_length,
    dmodal_offline_bruteforce,
    dmodal_offline_length,
    lis_length,
    lus_length,
)
from .policy import ChooserState, Decision, OptimalPolicy, WindowPolicy, heuristic_window_accept, optimal_accept
from .simulate import BatchSummary, Trajectory, run_batch, run_trajectory, telescoping_statistic
from .stats import BoundReport, bound_report, clt_statistic, conjecture_report
