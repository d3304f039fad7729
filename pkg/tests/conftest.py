import numpy as np
import pytest

from modalselect.bellman import ProblemSpec, solve


def quadrature_values(spec: ProblemSpec, points: int = 40001) -> np.ndarray:
    """Reference Bellman solution: integrate max(reject, accept) by dense midpoint rule.

    Uses no threshold structure at all, only the raw recursion on the
    piecewise-linear interpolant of the next row.
    """
    n, d, grid = spec.n, spec.d, spec.grid
    xq = (np.arange(points) + 0.5) / points
    values = np.zeros((n + 1, d + 1, spec.m))
    for i in range(n, 0, -1):
        nxt = values[i]
        for k in range(d + 1):
            same = np.interp(xq, grid, nxt[k])
            turn = np.interp(xq, grid, nxt[k + 1]) if k < d else None
            for j, s in enumerate(grid):
                stay = nxt[k, j]
                below = xq < s
                if k % 2 == 0:
                    acc_below = 1 + turn if turn is not None else np.full_like(xq, -np.inf)
                    acc = np.where(below, acc_below, 1 + same)
                else:
                    acc_above = 1 + turn if turn is not None else np.full_like(xq, -np.inf)
                    acc = np.where(below, 1 + same, acc_above)
                values[i - 1, k, j] = np.mean(np.maximum(stay, acc))
    return values


@pytest.fixture(scope="session")
def solved():
    cache = {}

    def get(n, d, m=2001):
        key = (n, d, m)
        if key not in cache:
            cache[key] = solve(ProblemSpec(n, d, m))
        return cache[key]

    return get


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
