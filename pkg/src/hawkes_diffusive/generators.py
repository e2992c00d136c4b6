"""Pointwise generators of the N-system and of the limit diffusion, and the
third-order Taylor bound on their difference."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import ModelSpec

GH_NODES = 64
GH_GUARD_RTOL = 1e-10


class UnsupportedJumpLaw(ValueError):
    pass


class QuadratureGuardError(ArithmeticError):
    pass


class GapViolation(AssertionError):
    def __init__(self, violations):
        super().__init__("generator gap exceeds bound at %d points: %r"
                         % (len(violations), violations[:5]))
        self.violations = violations


@dataclass(frozen=True)
class TestFunction:
    """g with its first three derivatives and their sup norms.

    ``sup_norms`` are (|g|, |g'|, |g''|, |g'''|) over ``interval`` (the whole
    line when ``interval`` is None).  ``increment(x, d)`` computes
    g(x + d) - g(x) without cancellation, when available.
    """

    __test__ = False  # not a pytest class

    name: str
    g: Callable
    d1: Callable
    d2: Callable
    d3: Callable
    sup_norms: tuple
    interval: Optional[tuple] = None
    increment: Optional[Callable] = field(default=None, compare=False, repr=False)

    def norm3(self) -> float:
        """||g||_{3,inf} = sum of the four sup norms."""
        return float(sum(self.sup_norms))

    def diff(self, x, d):
        if self.increment is not None:
            return self.increment(x, d)
        return self.g(x + d) - self.g(x)


def _sin() -> TestFunction:
    return TestFunction("sin", np.sin, np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x),
                        (1.0, 1.0, 1.0, 1.0), None,
                        lambda x, d: 2.0 * np.cos(x + 0.5 * d) * np.sin(0.5 * d))


def _tanh() -> TestFunction:
    def d1(x):
        return 1.0 - np.tanh(x) ** 2

    def d2(x):
        t = np.tanh(x)
        return -2.0 * t * (1.0 - t * t)

    def d3(x):
        t = np.tanh(x)
        return -2.0 * (1.0 - t * t) * (1.0 - 3.0 * t * t)

    def inc(x, d):
        # tanh(a) - tanh(b) = sinh(a - b) / (cosh a cosh b)
        return np.sinh(d) / (np.cosh(x + d) * np.cosh(x))

    return TestFunction("tanh", np.tanh, d1, d2, d3, (1.0, 1.0, 4.0 / (3.0 * math.sqrt(3.0)), 2.0),
                        None, inc)


def _bump() -> TestFunction:
    def g(x):
        return np.exp(-0.5 * np.asarray(x) ** 2)

    r = 3.0 - math.sqrt(6.0)
    s3 = (3.0 * math.sqrt(r) - r ** 1.5) * math.exp(-0.5 * r)
    return TestFunction(
        "gaussian_bump", g, lambda x: -x * g(x), lambda x: (x * x - 1.0) * g(x),
        lambda x: (3.0 * x - x ** 3) * g(x), (1.0, math.exp(-0.5), 1.0, s3), None,
        lambda x, d: g(x) * np.expm1(-x * d - 0.5 * d * d))


def monomial(power: int, interval=(-10.0, 10.0)) -> TestFunction:
    """x, x^2 or x^3 with sup norms local to ``interval``."""
    R = max(abs(interval[0]), abs(interval[1]))
    if power == 1:
        return TestFunction("x", lambda x: np.asarray(x, dtype=float) * 1.0,
                            lambda x: np.ones_like(np.asarray(x, dtype=float)),
                            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                            lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                            (R, 1.0, 0.0, 0.0), tuple(interval), lambda x, d: d + 0.0 * x)
    if power == 2:
        return TestFunction("x^2", lambda x: np.asarray(x, dtype=float) ** 2, lambda x: 2.0 * x,
                            lambda x: 2.0 + 0.0 * np.asarray(x, dtype=float),
                            lambda x: 0.0 * np.asarray(x, dtype=float),
                            (R * R, 2.0 * R, 2.0, 0.0), tuple(interval),
                            lambda x, d: (2.0 * x + d) * d)
    if power == 3:
        return TestFunction("x^3", lambda x: np.asarray(x, dtype=float) ** 3,
                            lambda x: 3.0 * x * x, lambda x: 6.0 * x,
                            lambda x: 6.0 + 0.0 * np.asarray(x, dtype=float),
                            (R ** 3, 3.0 * R * R, 6.0 * R, 6.0), tuple(interval),
                            lambda x, d: (3.0 * x * x + 3.0 * x * d + d * d) * d)
    raise ValueError("monomial power must be 1, 2 or 3")


def constant_function(c: float = 1.0) -> TestFunction:
    z = lambda x: 0.0 * np.asarray(x, dtype=float)  # noqa: E731
    return TestFunction("const", lambda x: c + z(x), z, z, z, (abs(c), 0.0, 0.0, 0.0), None,
                        lambda x, d: z(x) * d)


BUILTINS = {
    "sin": _sin,
    "tanh": _tanh,
    "gaussian_bump": _bump,
    "x": lambda: monomial(1),
    "x^2": lambda: monomial(2),
    "x^3": lambda: monomial(3),
}


def test_function(name: str) -> TestFunction:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise ValueError("unknown test function %r (have %s)" % (name, sorted(BUILTINS)))


test_function.__test__ = False


def apply_A_bar(g: TestFunction, spec: ModelSpec, x):
    x = np.asarray(x, dtype=np.float64)
    out = -spec.alpha * x * g.d1(x) + 0.5 * spec.sigma2 * spec.f(x) * g.d2(x)
    return float(out) if np.ndim(out) == 0 else out


def _jump_expectation(g: TestFunction, spec: ModelSpec, x, n, nodes=GH_NODES):
    """E_mu[g(x + U/sqrt(n)) - g(x)] and E_mu|g(x + U/sqrt(n)) - g(x)|."""
    mu = spec.mu
    sqn = math.sqrt(n)
    if mu.kind == "two_point":
        a, b, p = mu.params
        da, db = g.diff(x, a / sqn), g.diff(x, b / sqn)
        return p * da + (1.0 - p) * db, p * np.abs(da) + (1.0 - p) * np.abs(db)
    if mu.kind == "gaussian":
        z, w = np.polynomial.hermite_e.hermegauss(nodes)
        w = w / math.sqrt(2.0 * math.pi)
        d = mu.params[0] * z / sqn
        vals = g.diff(np.asarray(x, dtype=np.float64)[..., None], d)
        return np.sum(w * vals, axis=-1), np.sum(w * np.abs(vals), axis=-1)
    raise UnsupportedJumpLaw("no quadrature rule for jump law %r" % mu.kind)


def apply_A_N(g: TestFunction, spec: ModelSpec, x, n: Optional[int] = None):
    """-alpha x g'(x) + N f(x) E_mu[g(x + U/sqrt(N)) - g(x)].

    Closed form for two-point marks; 64-node Gauss-Hermite for Gaussian
    marks, guarded by comparison with the 128-node rule.
    """
    n = spec.n_components if n is None else int(n)
    x = np.asarray(x, dtype=np.float64)
    jump, size = _jump_expectation(g, spec, x, n)
    if spec.mu.kind == "gaussian":
        jump2, _ = _jump_expectation(g, spec, x, n, 2 * GH_NODES)
        # relative to the size of the integrand, since the mean may cancel
        if np.any(np.abs(jump2 - jump) > GH_GUARD_RTOL * size):
            raise QuadratureGuardError("Gauss-Hermite doubling guard failed for %s" % g.name)
    out = -spec.alpha * x * g.d1(x) + n * spec.f(x) * jump
    return float(out) if np.ndim(out) == 0 else out


def gap_bound(g: TestFunction, spec: ModelSpec, x, n: Optional[int] = None):
    """f(x) ||g'''|| E|U|^3 / (6 sqrt(N))."""
    n = spec.n_components if n is None else int(n)
    out = spec.f(np.asarray(x, dtype=np.float64)) * g.sup_norms[3] * spec.mu.abs_third_moment / (
        6.0 * math.sqrt(n))
    return float(out) if np.ndim(out) == 0 else out


def loglog_fit(xs, ys):
    """Least-squares slope, intercept and slope standard error of
    log y on log x."""
    lx = np.log(np.asarray(xs, dtype=np.float64))
    ly = np.log(np.asarray(ys, dtype=np.float64))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    k = len(lx)
    if k > 2:
        resid = ly - (slope * lx + intercept)
        s2 = float(resid @ resid) / (k - 2)
        se = math.sqrt(s2 / float(((lx - lx.mean()) ** 2).sum()))
    else:
        se = float("nan")
    return slope, intercept, se


@dataclass
class GapReport:
    g_name: str
    table: list  # (x, N, gap, bound)
    worst_ratio: float
    violations: list
    slope: Optional[float]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "g_name": self.g_name,
            "worst_ratio": self.worst_ratio,
            "violations": [list(v) for v in self.violations],
            "slope": self.slope,
            "table": [list(r) for r in self.table],
        }


def gap_check(g: TestFunction, spec: ModelSpec, x_grid, n_grid, tol: float = 1e-10,
              raise_on_violation: bool = False) -> GapReport:
    """|A^N g - A_bar g| <= bound + tol at every (x, N)."""
    xs = np.asarray(x_grid, dtype=np.float64)
    if g.interval is not None and (xs.min() < g.interval[0] or xs.max() > g.interval[1]):
        raise ValueError("x grid leaves the interval %r where the sup bounds of %s hold"
                         % (g.interval, g.name))
    table, violations = [], []
    abar = np.atleast_1d(apply_A_bar(g, spec, xs))
    worst = 0.0
    max_gap = []
    for n in n_grid:
        an = np.atleast_1d(apply_A_N(g, spec, xs, n))
        bound = np.atleast_1d(gap_bound(g, spec, xs, n))
        gap = np.abs(an - abar)
        max_gap.append(float(gap.max()))
        for x, gp, bd in zip(xs, gap, bound):
            table.append((float(x), int(n), float(gp), float(bd)))
            if gp > bd + tol:
                violations.append((float(x), int(n), float(gp), float(bd)))
            if bd > 0:
                worst = max(worst, float(gp / bd))
    slope = None
    if len(n_grid) >= 2 and min(max_gap) > 0:
        slope = loglog_fit(list(n_grid), max_gap)[0]
    report = GapReport(g.name, table, worst, violations, slope)
    if violations and raise_on_violation:
        raise GapViolation(violations)
    return report
