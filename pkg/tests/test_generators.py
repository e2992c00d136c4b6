import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hawkes_diffusive import generators as gen
from hawkes_diffusive.model import JumpDistribution, ModelSpec, RateFunction

QUAD = RateFunction.quadratic()
TWO = JumpDistribution.two_point(2, -1, 1 / 3)
GAUSS = JumpDistribution.gaussian(1.0)

# 100 [sin(0.2)/3 + 2 sin(-0.1)/3] at 30 digits (mpmath)
A_N_SIN_0 = -0.0332500832865029718071923234295
# -x cos x + N f(x) sin x (e^{-1/(2N)} - 1), x = 0.7, N = 50, Gaussian marks (mpmath)
A_N_SIN_GAUSS = -1.01293997628488244540556041694


def test_sup_norms_on_grid():
    xs = np.linspace(-20, 20, 400_001)
    for name in ("sin", "tanh", "gaussian_bump"):
        g = gen.test_function(name)
        for k, d in enumerate((g.g, g.d1, g.d2, g.d3)):
            assert np.max(np.abs(d(xs))) <= g.sup_norms[k] * (1 + 1e-12)
            assert np.max(np.abs(d(xs))) >= g.sup_norms[k] * (1 - 1e-6)


@pytest.mark.parametrize("name", ["sin", "tanh", "gaussian_bump", "x^3"])
def test_derivatives_by_finite_differences(name):
    g = gen.test_function(name)
    xs = np.linspace(-2, 2, 9)
    e = 1e-5
    for f, df in ((g.g, g.d1), (g.d1, g.d2), (g.d2, g.d3)):
        np.testing.assert_allclose((f(xs + e) - f(xs - e)) / (2 * e), df(xs), atol=1e-8)


@given(st.floats(-5, 5), st.floats(-1, 1))
@settings(max_examples=200, deadline=None)
def test_increments_match_differences(x, d):
    for name in ("sin", "tanh", "gaussian_bump", "x^2", "x^3"):
        g = gen.test_function(name)
        assert g.diff(x, d) == pytest.approx(g.g(x + d) - g.g(x), abs=1e-12)


def test_A_bar_examples():
    s = ModelSpec(1.0, QUAD, GAUSS)
    assert gen.apply_A_bar(gen.monomial(2), s, 1.0) == 0.0
    assert gen.apply_A_bar(gen.test_function("sin"), s, 0.0) == 0.0
    assert gen.apply_A_bar(gen.constant_function(3.0), s, 1.7) == 0.0


def test_A_N_two_point_oracle():
    s = ModelSpec(1.0, QUAD, TWO, 100)
    assert gen.apply_A_N(gen.test_function("sin"), s, 0.0) == pytest.approx(A_N_SIN_0, rel=1e-13)
    assert gen.gap_bound(gen.test_function("sin"), s, 0.0) == pytest.approx(10 / 3 / 60, rel=1e-14)


def test_A_N_gaussian_oracle():
    s = ModelSpec(1.0, QUAD, GAUSS, 50)
    assert gen.apply_A_N(gen.test_function("sin"), s, 0.7) == pytest.approx(A_N_SIN_GAUSS,
                                                                          rel=1e-12)


@pytest.mark.parametrize("mu", [TWO, GAUSS])
@pytest.mark.parametrize("n", [1, 10, 1000])
def test_polynomial_identities(mu, n):
    s = ModelSpec(1.3, QUAD, mu, n)
    xs = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(gen.apply_A_N(gen.monomial(1), s, xs), -1.3 * xs, atol=1e-12)
    np.testing.assert_allclose(gen.apply_A_N(gen.monomial(2), s, xs),
                               gen.apply_A_bar(gen.monomial(2), s, xs), atol=1e-11)


def test_gaussian_third_order_term_vanishes():
    s = ModelSpec(1.0, QUAD, GAUSS, 7)
    xs = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(gen.apply_A_N(gen.monomial(3), s, xs),
                               gen.apply_A_bar(gen.monomial(3), s, xs), atol=1e-10)


def test_bound_scaling():
    g = gen.test_function("tanh")
    s = ModelSpec(1.0, QUAD, TWO, 25)
    assert gen.gap_bound(g, s, 1.0, 100) == pytest.approx(gen.gap_bound(g, s, 1.0, 25) / 2)
    c = ModelSpec(1.0, RateFunction.constant(2.5), TWO, 25)
    b = gen.gap_bound(g, c, np.linspace(-4, 4, 9))
    assert np.all(b == b[0])


def test_gap_check_sin_two_point():
    s = ModelSpec(2.0, QUAD, TWO)
    rep = gen.gap_check(gen.test_function("sin"), s, np.arange(-3, 4.0), [10, 100, 1000, 10000])
    assert rep.ok and rep.worst_ratio <= 1
    assert rep.slope == pytest.approx(-0.5, abs=0.05)


def test_gap_check_x2_zero():
    s = ModelSpec(2.0, QUAD, TWO)
    rep = gen.gap_check(gen.monomial(2), s, np.arange(-3, 4.0), [10, 100])
    assert rep.ok
    assert max(r[2] for r in rep.table) < 1e-9


def test_gap_check_rejects_grid_outside_interval():
    with pytest.raises(ValueError):
        gen.gap_check(gen.monomial(3, (-1, 1)), ModelSpec(1.0, QUAD, TWO), [0.0, 2.0], [10])


def test_gap_violation_raised():
    # a deliberately wrong sup norm makes the bound too small
    g = gen.test_function("sin")
    bad = gen.TestFunction("bad", g.g, g.d1, g.d2, g.d3, (1.0, 1.0, 1.0, 1e-3), None, g.increment)
    with pytest.raises(gen.GapViolation):
        gen.gap_check(bad, ModelSpec(1.0, QUAD, TWO), [0.5], [10], raise_on_violation=True)


def test_unsupported_jump_law():
    mu = JumpDistribution.user_defined(lambda s: s.normal(), 1.0, 1.6, 3.0)
    with pytest.raises(gen.UnsupportedJumpLaw):
        gen.apply_A_N(gen.test_function("sin"), ModelSpec(1.0, QUAD, mu, 10), 0.0)


def test_loglog_fit_exact_power():
    ns = np.array([10, 100, 1000.0])
    slope, intercept, se = gen.loglog_fit(ns, 3.0 * ns ** -0.5)
    assert slope == pytest.approx(-0.5) and math.exp(intercept) == pytest.approx(3.0)
    assert se < 1e-12
