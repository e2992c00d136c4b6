"""Model description: jump-rate function, mark law, system parameters and
the explicit rate constants (beta, K_T) of the N-to-limit error bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numba import njit

from . import rng as _rng
from .quadrature import adaptive_simpson

# numba dispatch codes
RATE_QUADRATIC = 0
RATE_ROOT_QUADRATIC = 1
RATE_ARCTAN_SQ = 2
RATE_CONSTANT = 3
RATE_USER = -1

MARK_GAUSSIAN = 0
MARK_TWO_POINT = 1
MARK_USER = -1

_RATE_CODES = {
    "quadratic": RATE_QUADRATIC,
    "root_quadratic": RATE_ROOT_QUADRATIC,
    "arctan_sq": RATE_ARCTAN_SQ,
    "constant": RATE_CONSTANT,
    "user_defined": RATE_USER,
}
_MARK_CODES = {"gaussian": MARK_GAUSSIAN, "two_point": MARK_TWO_POINT, "user_defined": MARK_USER}

HALF_PI = 0.5 * math.pi
# sup |(sqrt f)'| for f = sqrt(1 + x^2), attained at x^2 = 2
ROOT_QUADRATIC_L = math.sqrt(2.0) / (2.0 * 3.0 ** 0.75)


@njit(cache=True)
def rate_eval(code, params, x):
    if code == RATE_QUADRATIC:
        return 1.0 + x * x
    elif code == RATE_ROOT_QUADRATIC:
        return math.sqrt(1.0 + x * x)
    elif code == RATE_ARCTAN_SQ:
        v = HALF_PI + math.atan(x)
        return v * v
    else:
        return params[0]


@njit(cache=True)
def rate_envelope(code, params, r):
    """sup of f over [-r, r]; each builtin is monotone on both half-lines."""
    if code == RATE_QUADRATIC:
        return 1.0 + r * r
    elif code == RATE_ROOT_QUADRATIC:
        return math.sqrt(1.0 + r * r)
    elif code == RATE_ARCTAN_SQ:
        v = HALF_PI + math.atan(r)
        return v * v
    else:
        return params[0]


@njit(cache=True)
def draw_mark(code, params, key, ctr):
    if code == MARK_GAUSSIAN:
        z, ctr = _rng.normal(key, ctr)
        return params[0] * z, ctr
    u, ctr = _rng.uniform(key, ctr)
    if u < params[2]:
        return params[0], ctr
    return params[1], ctr


@dataclass(frozen=True)
class RateFunction:
    """Jump-rate function f together with its thinning envelope
    F(r) = sup_{|y|<=r} f(y), the Lipschitz constant of sqrt(f) and the
    antiderivative G(x) = int_0^x y / f(y) dy.

    Use the constructors (:meth:`quadratic`, :meth:`constant`, ...) rather
    than the raw fields.
    """

    kind: str
    params: tuple = ()
    lipschitz_sqrt: float = 1.0
    user_eval: Optional[Callable[[float], float]] = field(default=None, compare=False, repr=False)
    user_envelope: Optional[Callable[[float], float]] = field(default=None, compare=False, repr=False)
    user_antiderivative: Optional[Callable[[float], float]] = field(
        default=None, compare=False, repr=False)

    @classmethod
    def quadratic(cls) -> "RateFunction":
        return cls("quadratic", (), 1.0)

    @classmethod
    def root_quadratic(cls) -> "RateFunction":
        return cls("root_quadratic", (), ROOT_QUADRATIC_L)

    @classmethod
    def arctan_sq(cls) -> "RateFunction":
        return cls("arctan_sq", (), 1.0)

    @classmethod
    def constant(cls, c: float = 1.0) -> "RateFunction":
        if not c > 0:
            raise ValueError("constant rate must be positive")
        return cls("constant", (float(c),), 0.0)

    @classmethod
    def user_defined(cls, f, envelope, lipschitz_sqrt, antiderivative=None) -> "RateFunction":
        """``f`` and ``envelope`` are scalar callables; the envelope must
        dominate f on [-r, r] or thinning is not exact (see :func:`validate`)."""
        return cls("user_defined", (), float(lipschitz_sqrt), f, envelope, antiderivative)

    @property
    def code(self) -> int:
        return _RATE_CODES[self.kind]

    @property
    def param_array(self) -> np.ndarray:
        return np.array(self.params if self.params else (0.0,), dtype=np.float64)

    def __call__(self, x):
        if self.kind == "user_defined":
            if np.ndim(x) == 0:
                return float(self.user_eval(float(x)))
            return np.array([self.user_eval(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "quadratic":
            out = 1.0 + x * x
        elif self.kind == "root_quadratic":
            out = np.sqrt(1.0 + x * x)
        elif self.kind == "arctan_sq":
            out = (HALF_PI + np.arctan(x)) ** 2
        else:
            out = np.full_like(x, self.params[0])
        return out[()] if out.ndim == 0 else out

    def envelope(self, r):
        if self.kind == "user_defined":
            if np.ndim(r) == 0:
                return float(self.user_envelope(abs(float(r))))
            return np.array([self.user_envelope(abs(float(v))) for v in np.ravel(r)]).reshape(
                np.shape(r))
        r = np.abs(np.asarray(r, dtype=np.float64))
        return np.maximum(self(r), self(-r))

    def antiderivative_ratio(self, x):
        """G(x) = int_0^x y / f(y) dy."""
        if self.kind == "quadratic":
            return 0.5 * np.log1p(np.asarray(x, dtype=np.float64) ** 2)
        if self.kind == "root_quadratic":
            x = np.asarray(x, dtype=np.float64)
            return np.sqrt(1.0 + x * x) - 1.0
        if self.kind == "constant":
            return np.asarray(x, dtype=np.float64) ** 2 / (2.0 * self.params[0])
        if self.user_antiderivative is not None:
            if np.ndim(x) == 0:
                return float(self.user_antiderivative(float(x)))
            return np.array([self.user_antiderivative(float(v)) for v in np.ravel(x)]).reshape(
                np.shape(x))
        if np.ndim(x) == 0:
            return adaptive_simpson(lambda y: y / float(self(y)), 0.0, float(x))
        return np.array([adaptive_simpson(lambda y: y / float(self(y)), 0.0, float(v))
                         for v in np.ravel(x)]).reshape(np.shape(x))

    def has_closed_form_antiderivative(self) -> bool:
        return self.kind in ("quadratic", "root_quadratic", "constant") or (
            self.user_antiderivative is not None)

    def describe(self) -> dict:
        d = {"kind": self.kind, "lipschitz_sqrt": self.lipschitz_sqrt}
        if self.kind == "constant":
            d["c"] = self.params[0]
        return d


@dataclass(frozen=True)
class JumpDistribution:
    """Centred mark law mu of the jumps (a jump moves X^N by u / sqrt(N))."""

    kind: str
    params: tuple
    variance: float
    abs_third_moment: float
    fourth_moment: float
    third_moment: float = 0.0
    user_sampler: Optional[Callable] = field(default=None, compare=False, repr=False)

    @classmethod
    def gaussian(cls, sigma: float = 1.0) -> "JumpDistribution":
        if not sigma > 0:
            raise ValueError("gaussian sigma must be positive")
        s = float(sigma)
        return cls("gaussian", (s,), s * s, 2.0 * math.sqrt(2.0 / math.pi) * s ** 3,
                   3.0 * s ** 4, 0.0)

    @classmethod
    def two_point(cls, a: float, b: float, p: float) -> "JumpDistribution":
        """Mark ``a`` with probability ``p``, ``b`` otherwise; must be centred."""
        a, b, p = float(a), float(b), float(p)
        if not 0.0 < p < 1.0:
            raise ValueError("two_point probability must lie in (0, 1)")
        if abs(p * a + (1.0 - p) * b) > 1e-12 * max(abs(a), abs(b)):
            raise ValueError("two_point law must be centred: p*a + (1-p)*b != 0")
        if a == b:
            raise ValueError("two_point law is degenerate")
        q = 1.0 - p
        return cls("two_point", (a, b, p), p * a * a + q * b * b,
                   p * abs(a) ** 3 + q * abs(b) ** 3, p * a ** 4 + q * b ** 4,
                   p * a ** 3 + q * b ** 3)

    @classmethod
    def two_point_unit(cls, a: float, b: float, p: float) -> "JumpDistribution":
        """The two-point law of shape (a, b; p), rescaled to unit variance."""
        s = math.sqrt(p * a * a + (1.0 - p) * b * b)
        return cls.two_point(a / s, b / s, p)

    @classmethod
    def user_defined(cls, sampler, variance, abs_third_moment, fourth_moment,
                     third_moment=0.0) -> "JumpDistribution":
        """``sampler(stream) -> float`` drawing from a centred law."""
        return cls("user_defined", (), float(variance), float(abs_third_moment),
                   float(fourth_moment), float(third_moment), sampler)

    @property
    def code(self) -> int:
        return _MARK_CODES[self.kind]

    @property
    def param_array(self) -> np.ndarray:
        return np.array(self.params if self.params else (0.0,), dtype=np.float64)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    def sample(self, stream: _rng.Stream) -> float:
        if self.kind == "user_defined":
            return float(self.user_sampler(stream))
        u, c = draw_mark(self.code, self.param_array, stream.key, stream.counter)
        stream.advance(c)
        return u

    def samples(self, stream: _rng.Stream, n: int) -> np.ndarray:
        if self.kind == "user_defined":
            return np.array([self.sample(stream) for _ in range(n)])
        out, c = _mark_block(self.code, self.param_array, stream.key, stream.counter, n)
        stream.advance(c)
        return out

    def support(self) -> Optional[tuple]:
        if self.kind == "two_point":
            return self.params[:2]
        return None

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "gaussian":
            d["sigma"] = self.params[0]
        elif self.kind == "two_point":
            d.update(a=self.params[0], b=self.params[1], p=self.params[2])
        d["variance"] = self.variance
        return d


@njit(cache=True)
def _mark_block(code, params, key, ctr, n):
    out = np.empty(n)
    for i in range(n):
        out[i], ctr = draw_mark(code, params, key, ctr)
    return out, ctr


@dataclass(frozen=True)
class ModelSpec:
    alpha: float
    f: RateFunction
    mu: JumpDistribution
    n_components: int = 1
    x0: float = 0.0

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError("alpha must be positive")
        if int(self.n_components) != self.n_components or self.n_components < 1:
            raise ValueError("n_components must be a positive integer")
        if not math.isfinite(self.x0):
            raise ValueError("x0 must be finite")

    @property
    def sigma2(self) -> float:
        return self.mu.variance

    @property
    def sigma(self) -> float:
        return self.mu.sigma

    @property
    def L(self) -> float:
        return self.f.lipschitz_sqrt

    def with_(self, **changes) -> "ModelSpec":
        d = dict(alpha=self.alpha, f=self.f, mu=self.mu, n_components=self.n_components,
                 x0=self.x0)
        d.update(changes)
        return ModelSpec(**d)


# ---------------------------------------------------------------------------
# rate constants


def beta(alpha: float, sigma2: float, L: float) -> float:
    s = sigma2 * L * L
    return max(0.5 * s - alpha, 2.0 * s - 2.0 * alpha, 3.5 * s - 3.0 * alpha)


def default_epsilon(alpha: float, sigma2: float, L: float) -> float:
    gap = 2.0 * alpha - sigma2 * L * L
    return gap / 2.0 if gap > 0 else 1.0


def k_T(alpha: float, sigma2: float, L: float, T: float, epsilon: float) -> float:
    """(1 + 1/eps) int_0^T (1+s^2) e^{beta s} (1 + e^{(sigma2 L^2 - 2 alpha + eps)(T-s)}) ds."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if T < 0:
        raise ValueError("T must be nonnegative")
    if T == 0:
        return 0.0
    b = beta(alpha, sigma2, L)
    c = sigma2 * L * L - 2.0 * alpha + epsilon

    def integrand(s):
        return (1.0 + s * s) * math.exp(b * s) * (1.0 + math.exp(c * (T - s)))

    return (1.0 + 1.0 / epsilon) * adaptive_simpson(integrand, 0.0, float(T))


def is_sharp_regime(alpha: float, sigma2: float, L: float) -> bool:
    return alpha > 7.0 / 6.0 * sigma2 * L * L


# ---------------------------------------------------------------------------
# validation


@dataclass
class Diagnostic:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    diagnostics: list
    sharp_regime: bool
    beta: float
    epsilon: float

    @property
    def ok(self) -> bool:
        return all(d.passed for d in self.diagnostics)

    def failed(self) -> list:
        return [d for d in self.diagnostics if not d.passed]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "sharp_regime": self.sharp_regime,
            "beta": self.beta,
            "epsilon": self.epsilon,
            "diagnostics": [{"name": d.name, "pass": d.passed, "detail": d.detail}
                            for d in self.diagnostics],
        }


def _check(diags, name, cond, detail=""):
    diags.append(Diagnostic(name, bool(cond), detail))


def validate(spec: ModelSpec, radius: float = 20.0, n_grid: int = 2001,
             n_draws: int = 10 ** 6, seed: int = 0) -> ValidationReport:
    """Grid and sampling diagnostics for a model; failures are reported,
    never raised."""
    diags: list = []
    f = spec.f
    xs = np.linspace(-radius, radius, n_grid)
    try:
        fx = np.asarray(f(xs), dtype=np.float64)
    except Exception as exc:  # a broken user callable is a diagnostic
        _check(diags, "rate.evaluable", False, repr(exc))
        fx = None
    if fx is not None:
        _check(diags, "rate.positive", np.all(fx > 0) and np.all(np.isfinite(fx)),
               "min f = %.6g" % float(np.min(fx)))
        if np.all(fx > 0):
            L = f.lipschitz_sqrt
            sq = np.sqrt(fx)
            slopes = np.abs(np.diff(sq)) / np.diff(xs)
            worst = float(slopes.max())
            _check(diags, "rate.sqrt_lipschitz", worst <= L + 1e-9,
                   "max grid slope %.6g vs L = %.6g" % (worst, L))
            growth = (math.sqrt(float(f(0.0))) + L * np.abs(xs)) ** 2
            _check(diags, "rate.quadratic_growth", np.all(fx <= growth * (1 + 1e-12)),
                   "f(x) <= (sqrt f(0) + L|x|)^2")
            # running sup of f over [-r, r] on the symmetric grid
            order = np.argsort(np.abs(xs), kind="stable")
            run_max = np.maximum.accumulate(fx[order])
            env = np.asarray(f.envelope(np.abs(xs[order])), dtype=np.float64)
            bad = run_max > env * (1 + 1e-12)
            _check(diags, "rate.envelope_dominates", not np.any(bad),
                   "%d grid radii where F(r) < sup f" % int(bad.sum()))

    mu = spec.mu
    _check(diags, "jump.variance_positive", mu.variance > 0, "sigma^2 = %.6g" % mu.variance)
    _check(diags, "jump.fourth_moment_finite", math.isfinite(mu.fourth_moment)
           and mu.fourth_moment >= mu.variance ** 2, "m4 = %.6g" % mu.fourth_moment)
    if mu.kind == "two_point":
        a, b, p = mu.params
        _check(diags, "jump.two_point_centred",
               abs(p * a + (1 - p) * b) <= 1e-12 * max(abs(a), abs(b)))
    if n_draws > 0:
        try:
            u = mu.samples(_rng.Stream(seed, _rng.TAG_AUX, 0), n_draws)
            se = float(np.std(u) / math.sqrt(n_draws))
            m = float(np.mean(u))
            _check(diags, "jump.centred_sample", abs(m) <= 4 * se + 1e-300,
                   "sample mean %.3g, 4 se = %.3g" % (m, 4 * se))
            u4 = u ** 4
            se4 = float(np.std(u4) / math.sqrt(n_draws))
            m4 = float(np.mean(u4))
            _check(diags, "jump.fourth_moment_sample", abs(m4 - mu.fourth_moment) <= 4 * se4 + 1e-12,
                   "sample m4 %.4g vs %.4g" % (m4, mu.fourth_moment))
        except Exception as exc:
            _check(diags, "jump.sampler", False, repr(exc))

    sigma2, L = mu.variance, f.lipschitz_sqrt
    return ValidationReport(diags, is_sharp_regime(spec.alpha, sigma2, L),
                            beta(spec.alpha, sigma2, L), default_epsilon(spec.alpha, sigma2, L))
