import math

import numpy as np
import pytest
from scipy import stats

from hawkes_diffusive import hawkes_engine as he
from hawkes_diffusive import rng
from hawkes_diffusive.model import JumpDistribution, ModelSpec, RateFunction

QUAD = RateFunction.quadratic()
ONE = RateFunction.constant(1.0)
GAUSS = JumpDistribution.gaussian(1.0)
TWO = JumpDistribution.two_point(2, -1, 1 / 3)


def spec(f=QUAD, mu=GAUSS, n=20, alpha=1.0, x0=0.0):
    return ModelSpec(alpha, f, mu, n, x0)


def test_state_at_pure_decay():
    path = he.SkeletonPath(np.array([0.0]), np.array([1.0]), 2.0, 1.0, 4)
    assert he.state_at(path, 0.5) == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert he.state_at(path, 0.0) == 1.0


def test_state_at_one_jump():
    # x0 = 0, one event at t = 1 with u = 2, N = 4
    path = he.SkeletonPath(np.array([0.0, 1.0]), np.array([0.0, 2.0 / math.sqrt(4)]), 1.0, 2.0, 4)
    assert he.state_at(path, 1.0) == 1.0
    assert he.state_at(path, 1.0, left=True) == 0.0
    with pytest.raises(ValueError):
        he.state_at(path, 2.5)


def test_two_point_jumps_are_marks_over_sqrt_n():
    s = spec(mu=TWO, n=16, alpha=1.5, x0=0.3)
    path, log = he.simulate(s, 3.0, rng.Stream(2, rng.TAG_HAWKES, 0))
    assert len(log) > 0
    assert set(np.unique(log.marks)) <= {2.0, -1.0}
    pre = he.state_at(path, log.times, left=True)
    np.testing.assert_allclose(path.values[1:] - pre, log.marks / 4.0, atol=1e-13)
    assert np.all(np.diff(log.times) > 0)
    assert log.components.min() >= 1 and log.components.max() <= 16


def test_kernel_and_python_paths_agree_bitwise():
    s = spec(mu=TWO, n=10, alpha=1.0, x0=0.5)
    p1, l1 = he.simulate(s, 2.0, rng.Stream(9, rng.TAG_HAWKES, 1))
    p2, l2 = he.simulate(s, 2.0, rng.Stream(9, rng.TAG_HAWKES, 1), force_python=True)
    assert np.array_equal(p1.values, p2.values)
    assert np.array_equal(l1.times, l2.times)
    assert np.array_equal(l1.components, l2.components)


def test_user_defined_rate_runs_through_python_path():
    f = RateFunction.user_defined(lambda x: 1.0 + x * x, lambda r: 1.0 + r * r, 1.0)
    s = spec(f=f, mu=TWO, n=10, x0=0.5)
    p1, _ = he.simulate(s, 2.0, rng.Stream(9, rng.TAG_HAWKES, 1))
    p2, _ = he.simulate(spec(mu=TWO, n=10, x0=0.5), 2.0, rng.Stream(9, rng.TAG_HAWKES, 1))
    assert np.array_equal(p1.values, p2.values)


def test_envelope_violation_is_reported():
    f = RateFunction.user_defined(lambda x: 2.0, lambda r: 1.0, 0.0)
    with pytest.raises(he.EnvelopeViolation):
        he.simulate(spec(f=f), 1.0, rng.Stream(0, rng.TAG_HAWKES, 0))


def test_event_cap():
    with pytest.raises(he.EventCapExceeded):
        he.simulate(spec(f=ONE, n=100), 10.0, rng.Stream(0, rng.TAG_HAWKES, 0), cap=50)
    with pytest.raises(he.EventCapExceeded):
        he.simulate_batch(spec(f=ONE, n=100), 10.0, [10.0], 4, 0, cap=50)


def test_counting_paths_partition_events():
    s = spec(f=ONE, n=5)
    _, log = he.simulate(s, 4.0, rng.Stream(1, rng.TAG_HAWKES, 0))
    z = he.counting_paths(log, 7)
    assert sum(zi(4.0) for zi in z[:5]) == len(log)
    assert z[5](4.0) == 0 and z[6](4.0) == 0
    assert all(zi(0.0) == 0 for zi in z)
    empty = he.EventLog(np.empty(0), np.empty(0, np.int64), np.empty(0), 1.0, 3)
    assert [c(1.0) for c in he.counting_paths(empty, 3)] == [0, 0, 0]


def test_batch_matches_single_runs():
    s = spec(mu=TWO, n=10, x0=0.2)
    b = he.simulate_batch(s, 2.0, [0.5, 2.0], 5, seed=11, track=3)
    for r in range(5):
        path, log = he.simulate(s, 2.0, rng.Stream(11, rng.TAG_HAWKES, r))
        # same path; the final decay is evaluated by different exp routines
        np.testing.assert_allclose(b.x[r], he.state_at(path, np.array([0.5, 2.0])), rtol=1e-14)
        assert b.totals[r] == len(log)
        for i in range(3):
            assert b.counts[r, i] == np.count_nonzero(log.components == i + 1)


def test_batch_independent_of_worker_count():
    s = spec(n=50)
    a = he.simulate_batch(s, 1.0, [1.0], 64, seed=3, workers=1)
    b = he.simulate_batch(s, 1.0, [1.0], 64, seed=3, workers=3)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.counts, b.counts)


def test_constant_rate_total_is_poisson():
    b = he.simulate_batch(spec(f=ONE, n=50), 2.0, [2.0], 2000, seed=5, track=0)
    tot = b.totals.astype(float)
    n = tot.size
    assert abs(tot.mean() - 100) < 4 * math.sqrt(100 / n)
    # sd of the sample variance of Poisson(100): sqrt((mu4 - s^4)/n), mu4 = 3 l^2 + l
    assert abs(tot.var(ddof=1) - 100) < 4 * math.sqrt((3 * 100 ** 2 + 100 - 100 ** 2) / n)


def test_constant_rate_interevent_times_exponential():
    _, log = he.simulate(spec(f=ONE, n=50), 200.0, rng.Stream(6, rng.TAG_HAWKES, 0))
    gaps = np.diff(np.concatenate(([0.0], log.times)))
    assert stats.kstest(gaps, "expon", args=(0, 1 / 50)).pvalue > 1e-3


def test_constant_rate_components_uniform():
    _, log = he.simulate(spec(f=ONE, n=20), 500.0, rng.Stream(7, rng.TAG_HAWKES, 0))
    counts = np.bincount(log.components[:10_000], minlength=21)[1:]
    assert stats.chisquare(counts).pvalue > 1e-3


def test_constant_rate_law_is_ou_moments():
    alpha, x0, t = 1.0, 1.0, 1.0
    b = he.simulate_batch(spec(f=ONE, n=100, alpha=alpha, x0=x0), t, [t], 20_000, seed=8,
                          track=0)
    x = b.x[:, 0]
    m = x0 * math.exp(-alpha * t)
    v = (1 - math.exp(-2 * alpha * t)) / (2 * alpha)
    n = x.size
    assert abs(x.mean() - m) < 4 * math.sqrt(v / n)
    assert abs(x.var(ddof=1) - v) < 4 * v * math.sqrt(2 / n) * 1.2


def test_figure_one_scale():
    # alpha = 1, mu = N(0,1), f = 1+x^2, N = 100 on [0, 10]
    s = spec(n=100, alpha=1.0)
    path, log = he.simulate(s, 10.0, rng.Stream(42, rng.TAG_HAWKES, 0))
    assert np.max(np.abs(path.values)) < 10
    assert len(log) > 100


def test_csv_round_trip(tmp_path):
    s = spec(mu=TWO, n=10)
    path, log = he.simulate(s, 1.0, rng.Stream(1, rng.TAG_HAWKES, 0))
    log.to_csv(tmp_path / "e.csv")
    path.to_csv(tmp_path / "p.csv")
    e = np.loadtxt(tmp_path / "e.csv", delimiter=",", skiprows=1, ndmin=2)
    p = np.loadtxt(tmp_path / "p.csv", delimiter=",", skiprows=1, ndmin=2)
    assert np.array_equal(e[:, 0], log.times)
    assert np.array_equal(p[:, 1], path.values)
    assert open(tmp_path / "e.csv").readline().strip() == "t,component,mark"
