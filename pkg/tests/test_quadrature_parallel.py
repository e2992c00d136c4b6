import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hawkes_diffusive import parallel
from hawkes_diffusive.quadrature import QuadratureError, adaptive_simpson


@pytest.mark.parametrize("f,a,b,exact", [
    (math.sin, 0.0, math.pi, 2.0),
    (lambda x: math.exp(-x * x), -10.0, 10.0, math.sqrt(math.pi)),
    (lambda x: 1.0 / (1.0 + x * x) ** 3, -50.0, 50.0,
     2 * (50 / (4 * 2501 ** 2) + 3 * 50 / (8 * 2501) + 3 / 8 * math.atan(50))),
    (math.sqrt, 0.0, 1.0, 2.0 / 3.0),
])
def test_known_integrals(f, a, b, exact):
    assert adaptive_simpson(f, a, b) == pytest.approx(exact, rel=1e-9, abs=1e-11)


def test_orientation_and_empty():
    assert adaptive_simpson(math.cos, 1.0, 0.0) == pytest.approx(-math.sin(1.0), rel=1e-12)
    assert adaptive_simpson(math.cos, 2.0, 2.0) == 0.0


def test_non_finite_integrand():
    with pytest.raises(QuadratureError):
        adaptive_simpson(lambda x: 1.0 / x if x else math.inf, 0.0, 1.0)


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=5), st.floats(-2, 0), st.floats(0.1, 3))
@settings(max_examples=50, deadline=None)
def test_polynomials_exact(coefs, a, w):
    p = np.polynomial.Polynomial(coefs)
    q = p.integ()
    assert adaptive_simpson(p, a, a + w) == pytest.approx(q(a + w) - q(a), rel=1e-9, abs=1e-10)


@given(st.integers(1, 5000), st.integers(1, 16))
@settings(max_examples=100, deadline=None)
def test_chunks_partition(reps, workers):
    b = parallel.chunk_bounds(reps, workers)
    assert b[0][0] == 0 and b[-1][1] == reps
    assert all(x[1] == y[0] for x, y in zip(b, b[1:]))
    assert all(x[0] < x[1] for x in b)


def test_run_chunked_covers_each_index_once():
    hits = np.zeros(1000, dtype=int)

    def fill(a, b):
        hits[a:b] += 1

    parallel.run_chunked(fill, 1000, workers=3)
    assert np.all(hits == 1)


def test_worker_env_fallback(monkeypatch):
    monkeypatch.setenv(parallel.ENV_VAR, "3")
    assert parallel.get_workers() == 3
    parallel.set_workers(2)
    assert parallel.get_workers() == 2
    parallel.set_workers(None)
    monkeypatch.setenv(parallel.ENV_VAR, "junk")
    assert parallel.get_workers() == 1
