import csv
import math

import numpy as np
import pytest

from modalselect.bellman import ProblemSpec
from modalselect.errors import ConfigurationError, DomainError, UnsupportedError
from modalselect.offline import dmodal_offline_length
from modalselect.policy import OptimalPolicy, WindowPolicy
from modalselect.simulate import (
    TRAJECTORY_COLUMNS,
    derive_seed,
    grid_slack,
    record_batch,
    run_batch,
    run_trajectory,
    telescoping_statistic,
    uniform_stream,
)


@pytest.fixture(scope="module")
def unimodal(solved):
    vt, tt = solved(100, 1, 501)
    return vt.spec, vt, tt


def test_injected_stream_n2(solved):
    vt, tt = solved(2, 1, 1001)
    traj = run_trajectory(OptimalPolicy(tt), vt.spec, vt, stream=[0.3, 0.6])
    assert traj.accepted.tolist() == [True, True]
    assert traj.final_length == 2
    assert traj.a.tolist() == [0.0, 0.0] and traj.b.tolist() == [1.0, 1.0]


@pytest.mark.parametrize("x", [0.0, 0.37, 1.0])
def test_single_observation_always_taken(solved, x):
    vt, tt = solved(1, 1, 101)
    traj = run_trajectory(OptimalPolicy(tt), vt.spec, vt, stream=[x])
    assert traj.final_length == 1


def test_martingale_endpoints(unimodal):
    spec, vt, tt = unimodal
    traj = run_trajectory(OptimalPolicy(tt), spec, vt, seed=11)
    assert traj.y0 == vt.v0
    assert traj.y[-1] == traj.final_length
    assert traj.d_inc[0] == traj.y[0] - vt.v0
    np.testing.assert_allclose(np.cumsum(traj.d_inc) + vt.v0, traj.y, atol=1e-9)
    assert np.all(np.abs(traj.d_inc) <= 1 + grid_slack(spec))


def test_selected_values_are_unimodal(unimodal):
    spec, vt, tt = unimodal
    for seed in range(20):
        traj = run_trajectory(OptimalPolicy(tt), spec, vt, seed=seed)
        sel = traj.selected.tolist()
        assert dmodal_offline_length(sel, 1) == len(sel)
        # block index only moves up, by one per turn
        assert np.all(np.diff(traj.k) >= 0) and traj.k[-1] <= 1


def test_replay_is_bit_exact(unimodal):
    spec, vt, tt = unimodal
    t1 = run_trajectory(OptimalPolicy(tt), spec, vt, seed=2**63 + 5)
    t2 = run_trajectory(OptimalPolicy(tt), spec, vt, seed=2**63 + 5)
    for name in ("x", "a", "b", "accepted", "s", "k", "y", "d_inc"):
        assert np.array_equal(getattr(t1, name), getattr(t2, name))


def test_batch_run_matches_single_trajectory(unimodal):
    spec, vt, tt = unimodal
    pol = OptimalPolicy(tt)
    batch = run_batch(pol, spec, vt, reps=7, base_seed=99)
    for j in range(7):
        traj = run_trajectory(pol, spec, vt, seed=derive_seed(99, j))
        assert traj.final_length == batch.lengths[j]
        assert telescoping_statistic(traj)[0] == pytest.approx(batch.runs["sum_sq"][j], abs=1e-12)


def test_seed_stream_is_documented_philox():
    seed = derive_seed(5, 3)
    expected_seed = int(np.random.SeedSequence(5, spawn_key=(3,)).generate_state(1, np.uint64)[0])
    assert seed == expected_seed
    gen = np.random.Generator(np.random.Philox(key=seed))
    np.testing.assert_array_equal(uniform_stream(seed, 10), gen.random(10))


def test_reflected_run_mirrors_stream(unimodal):
    spec, vt, tt = unimodal
    stream = uniform_stream(4, spec.n)
    direct = run_trajectory(OptimalPolicy(tt), spec, vt, stream=1.0 - stream)
    mirrored = run_trajectory(OptimalPolicy(tt, reflect=True), spec, vt, stream=stream)
    assert np.array_equal(direct.accepted, mirrored.accepted)


class TestBatch:
    def test_single_rep(self, unimodal):
        spec, vt, tt = unimodal
        batch = run_batch(OptimalPolicy(tt), spec, vt, reps=1, base_seed=3)
        traj = run_trajectory(OptimalPolicy(tt), spec, vt, seed=derive_seed(3, 0))
        assert batch.sample_variance == 0.0
        assert batch.sample_mean == traj.final_length

    def test_deterministic(self, unimodal):
        spec, vt, tt = unimodal
        b1 = run_batch(OptimalPolicy(tt), spec, vt, reps=300, base_seed=17)
        b2 = run_batch(OptimalPolicy(tt), spec, vt, reps=300, base_seed=17)
        assert b1.to_dict() == b2.to_dict()

    def test_chunking_and_workers_do_not_matter(self, unimodal):
        spec, vt, tt = unimodal
        pol = OptimalPolicy(tt)
        ref = run_batch(pol, spec, vt, reps=500, base_seed=8)
        alt = run_batch(pol, spec, vt, reps=500, base_seed=8, workers=3, chunk=37)
        assert ref.to_dict() == alt.to_dict()

    def test_zero_reps(self, unimodal):
        spec, vt, tt = unimodal
        with pytest.raises(DomainError):
            run_batch(OptimalPolicy(tt), spec, vt, reps=0, base_seed=1)

    def test_spec_mismatch(self, unimodal, solved):
        spec, vt, tt = unimodal
        other, _ = solved(50, 1, 501)
        with pytest.raises(ConfigurationError):
            run_batch(OptimalPolicy(tt), spec, other, reps=2, base_seed=1)
        with pytest.raises(ConfigurationError):
            run_trajectory(OptimalPolicy(tt), other.spec, other, seed=1)

    def test_mean_near_solver_value(self, unimodal):
        spec, vt, tt = unimodal
        batch = run_batch(OptimalPolicy(tt), spec, vt, reps=4000, base_seed=21)
        assert abs(batch.sample_mean - vt.v0) < 3 * batch.stderr_mean
        assert batch.all_feasible and batch.martingale_bound_holds()

    def test_heuristic_is_feasible_and_not_better(self, unimodal):
        spec, vt, tt = unimodal
        opt = run_batch(OptimalPolicy(tt), spec, vt, reps=4000, base_seed=5)
        heu = run_batch(WindowPolicy(spec), spec, vt, reps=4000, base_seed=5)
        assert heu.all_feasible
        assert heu.sample_mean <= opt.sample_mean + 3 * math.hypot(opt.stderr_mean, heu.stderr_mean)

    @pytest.mark.parametrize("d", [0, 2, 3])
    def test_feasibility_other_budgets(self, solved, d):
        vt, tt = solved(60, d, 301)
        for pol in (OptimalPolicy(tt), WindowPolicy(vt.spec)):
            _, steps = record_batch(pol, vt.spec, vt, reps=50, base_seed=d)
            for r in range(50):
                sel = steps["x"][r][steps["accepted"][r]].tolist()
                assert dmodal_offline_length(sel, d) == len(sel)


class TestTelescoping:
    def test_empty_intervals(self, unimodal):
        spec, vt, tt = unimodal
        traj = run_trajectory(OptimalPolicy(tt), spec, vt, seed=1)
        empty = type(traj)(**{**traj.__dict__, "a": traj.s.copy(), "b": traj.s.copy()})
        assert telescoping_statistic(empty)[0] == 0.0

    def test_g_range(self, unimodal):
        spec, vt, tt = unimodal
        for seed in range(30):
            _, g = telescoping_statistic(run_trajectory(OptimalPolicy(tt), spec, vt, seed=seed))
            assert 0.0 <= g <= 2.0

    def test_unsupported_budget(self, solved):
        vt, tt = solved(10, 0, 101)
        traj = run_trajectory(OptimalPolicy(tt), vt.spec, vt, seed=1)
        with pytest.raises(UnsupportedError):
            telescoping_statistic(traj)

    def test_monte_carlo_mean_below_four(self, unimodal):
        spec, vt, tt = unimodal
        batch = run_batch(OptimalPolicy(tt), spec, vt, reps=2000, base_seed=4)
        assert batch.telescoping_mean < 4
        gap = batch.runs["sum_sq"] - 2 * batch.runs["g_terminal"]
        assert gap.mean() <= 3 * gap.std(ddof=1) / math.sqrt(len(gap))


def test_martingale_increments_have_zero_conditional_mean(unimodal):
    spec, vt, tt = unimodal
    _, steps = record_batch(OptimalPolicy(tt), spec, vt, reps=4000, base_seed=12)
    reps, n = steps["d_inc"].shape
    s_prev = np.concatenate([np.zeros((reps, 1)), steps["s"][:, :-1]], axis=1)
    k_prev = np.concatenate([np.zeros((reps, 1), dtype=np.int64), steps["k"][:, :-1]], axis=1)
    i_bin = np.broadcast_to(np.arange(n) * 10 // n, (reps, n))
    s_bin = np.minimum((s_prev / 0.05).astype(int), 19)
    key = (i_bin * 20 + s_bin) * 2 + k_prev
    d = steps["d_inc"].ravel()
    key = key.ravel()
    tested = 0
    for b in np.unique(key):
        vals = d[key == b]
        if len(vals) < 200:
            continue
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        assert abs(vals.mean()) <= 4 * se + 1e-12, b
        tested += 1
    assert tested > 50


def test_variance_identity(unimodal):
    spec, vt, tt = unimodal
    batch = run_batch(OptimalPolicy(tt), spec, vt, reps=4000, base_seed=31)
    # (U - v0)^2 - sum d_i^2 has mean zero since cross terms of martingale differences vanish
    q = (batch.lengths - vt.v0) ** 2 - batch.runs["sum_d_sq"]
    assert abs(q.mean()) <= 4 * q.std(ddof=1) / math.sqrt(len(q))
    assert abs(batch.sample_variance - batch.mean_sum_d_sq) <= 4 * batch.variance_stderr


def test_wald_identity_for_window_heuristic(solved):
    vt, _ = solved(400, 1, 201)
    spec = vt.spec
    pol = WindowPolicy(spec)
    w = pol.width
    _, steps = record_batch(pol, spec, vt, reps=3000, base_seed=77)
    half = spec.n // 2
    s = steps["s"][:, :half]
    hit = s > 1 - w
    nu = np.where(hit.any(axis=1), hit.argmax(axis=1) + 1, half)
    cols = np.arange(half)[None, :]
    count = (steps["accepted"][:, :half] & (cols < nu[:, None])).sum(axis=1)
    diff = count - w * nu
    assert abs(diff.mean()) <= 3 * diff.std(ddof=1) / math.sqrt(len(diff))


def test_trajectory_csv(unimodal, tmp_path):
    spec, vt, tt = unimodal
    traj = run_trajectory(OptimalPolicy(tt), spec, vt, seed=9)
    path = tmp_path / "t.csv"
    traj.write_csv(path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0].keys()) == TRAJECTORY_COLUMNS
    assert len(rows) == spec.n
    assert [float(r["x"]) for r in rows] == traj.x.tolist()
    assert sum(int(r["accepted"]) for r in rows) == traj.final_length
