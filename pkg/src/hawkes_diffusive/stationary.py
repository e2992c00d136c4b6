"""Invariant density of the limit diffusion and Wasserstein-1 distances."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import hawkes_engine
from .hawkes_engine import fmt17
from .model import ModelSpec, RateFunction
from .quadrature import adaptive_simpson

TAIL_TOL = 1e-10
R_START = 20.0
R_MAX = 1e8
QUANTILE_POINTS = 10 ** 5
GRID_POINTS = 200_001


class TailDivergence(ArithmeticError):
    pass


@dataclass(frozen=True)
class InvariantDensity:
    """p(x) = exp(log_unnormalized(x)) / Z with
    log_unnormalized(x) = -log f(x) - (2 alpha / sigma^2) G(x)."""

    f: RateFunction
    alpha: float
    sigma2: float
    Z: float
    radius: float
    grid: np.ndarray
    pdf_grid: np.ndarray
    cdf_grid: np.ndarray
    quantile_table: np.ndarray

    def log_unnormalized(self, x):
        x = np.asarray(x, dtype=np.float64)
        return -np.log(self.f(x)) - (2.0 * self.alpha / self.sigma2) * self.f.antiderivative_ratio(x)

    def pdf(self, x):
        out = np.exp(self.log_unnormalized(x)) / self.Z
        return float(out) if np.ndim(out) == 0 else out

    def quantile(self, u):
        """Inverse CDF by linear interpolation in the tabulated quantiles."""
        u = np.asarray(u, dtype=np.float64)
        levels = np.linspace(0.0, 1.0, self.quantile_table.size)
        out = np.interp(u, levels, self.quantile_table)
        return float(out) if out.ndim == 0 else out

    def moment(self, k: int) -> float:
        return _integrate_pieces(lambda x: x ** k * math.exp(float(self.log_unnormalized(x))),
                                 self.radius) / self.Z

    def to_csv(self, path, stride: int = 100) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "p"])
            for x, p in zip(self.grid[::stride], self.pdf_grid[::stride]):
                w.writerow([fmt17(x), fmt17(p)])


def _integrate_pieces(fn, radius):
    """int over [-radius, radius] split at 0 and at R_START * 2^k so the
    peak is never straddled by a huge initial panel."""
    edges = [0.0]
    r = min(R_START, radius)
    while True:
        edges.append(r)
        if r >= radius:
            break
        r = min(2.0 * r, radius)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += adaptive_simpson(fn, a, b) + adaptive_simpson(fn, -b, -a)
    return total


def _normalize(spec_f: RateFunction, alpha: float, sigma2: float):
    k = 2.0 * alpha / sigma2

    def q(x):
        fx = float(spec_f(x))
        return math.exp(-math.log(fx) - k * float(spec_f.antiderivative_ratio(x)))

    Z = adaptive_simpson(q, -R_START, 0.0) + adaptive_simpson(q, 0.0, R_START)
    R = R_START
    while True:
        piece = adaptive_simpson(q, R, 2 * R) + adaptive_simpson(q, -2 * R, -R)
        Z += piece
        R *= 2
        if piece <= TAIL_TOL * Z:
            return Z, R
        if R >= R_MAX:
            raise TailDivergence("invariant density tail mass not below %g by |x| = %g"
                                 % (TAIL_TOL, R))


def _antiderivative_grid(f: RateFunction, xs: np.ndarray) -> np.ndarray:
    if f.has_closed_form_antiderivative():
        return np.asarray(f.antiderivative_ratio(xs), dtype=np.float64)
    # cumulative Simpson outward from the node nearest 0, exact at 0
    i0 = int(np.argmin(np.abs(xs)))
    G = np.empty_like(xs)
    G[i0] = float(f.antiderivative_ratio(xs[i0]))
    ratio = lambda y: y / f(y)  # noqa: E731
    mid = 0.5 * (xs[1:] + xs[:-1])
    seg = (xs[1:] - xs[:-1]) / 6.0 * (ratio(xs[:-1]) + 4.0 * ratio(mid) + ratio(xs[1:]))
    G[i0 + 1:] = G[i0] + np.cumsum(seg[i0:])
    G[:i0] = G[i0] - np.cumsum(seg[:i0][::-1])[::-1]
    return G


def invariant_density(spec: ModelSpec) -> InvariantDensity:
    return _invariant_density_cached(spec.f, float(spec.alpha), float(spec.sigma2))


@lru_cache(maxsize=16)
def _invariant_density_cached(f: RateFunction, alpha: float, sigma2: float) -> InvariantDensity:
    Z, R = _normalize(f, alpha, sigma2)
    # sinh-spaced grid: dense near the mode, reaching |x| = R
    v = np.linspace(-math.asinh(R), math.asinh(R), GRID_POINTS)
    xs = np.sinh(v)
    xs[GRID_POINTS // 2] = 0.0
    logq = -np.log(f(xs)) - (2.0 * alpha / sigma2) * _antiderivative_grid(f, xs)
    pdf = np.exp(logq) / Z
    # cumulative Simpson on each cell, with the midpoint evaluated exactly
    mid = 0.5 * (xs[1:] + xs[:-1])
    logm = -np.log(f(mid)) - (2.0 * alpha / sigma2) * _antiderivative_grid(f, mid)
    seg = (xs[1:] - xs[:-1]) / 6.0 * (pdf[:-1] + 4.0 * np.exp(logm) / Z + pdf[1:])
    cdf = np.concatenate(([0.0], np.cumsum(seg)))
    cdf /= cdf[-1]
    levels = np.linspace(0.0, 1.0, QUANTILE_POINTS)
    # drop flat stretches so the CDF is strictly increasing for inversion
    keep = np.concatenate(([True], np.diff(cdf) > 0))
    table = np.interp(levels, cdf[keep], xs[keep])
    return InvariantDensity(f, alpha, sigma2, Z, R, xs, pdf, cdf, table)


def _as_sorted(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.size == 0:
        raise ValueError("empty sample set")
    return np.sort(a)


def _thin_sorted(a: np.ndarray, n: int) -> np.ndarray:
    """n order statistics evenly spread over a larger sorted sample."""
    idx = ((np.arange(n) + 0.5) * a.size / n).astype(np.int64)
    return a[np.minimum(idx, a.size - 1)]


def wasserstein1(samples, reference) -> float:
    """W1 between a sample set and either another sample set (mean absolute
    difference of sorted values, larger set thinned to equal size) or an
    :class:`InvariantDensity` (against quantiles at i/(n+1))."""
    a = _as_sorted(samples)
    if isinstance(reference, InvariantDensity):
        n = a.size
        q = reference.quantile(np.arange(1, n + 1) / (n + 1.0))
        return float(np.mean(np.abs(a - q)))
    b = _as_sorted(reference)
    if a.size > b.size:
        a = _thin_sorted(a, b.size)
    elif b.size > a.size:
        b = _thin_sorted(b, a.size)
    return float(np.mean(np.abs(a - b)))


def wasserstein1_with_sem(samples, reference, n_boot: int = 64, seed: int = 0):
    """W1 plus a bootstrap standard error (resampling ``samples``)."""
    from . import rng as _rng

    a = np.asarray(samples, dtype=np.float64).ravel()
    w = wasserstein1(a, reference)
    stream = _rng.Stream(seed, _rng.TAG_AUX, 0)
    boots = np.empty(n_boot)
    for b in range(n_boot):
        idx = np.minimum((stream.uniforms(a.size) * a.size).astype(np.int64), a.size - 1)
        boots[b] = wasserstein1(a[idx], reference)
    return w, float(np.std(boots, ddof=1))


def long_run_law(spec: ModelSpec, t: float, reps: int, seed: int, workers=None) -> np.ndarray:
    """``reps`` independent draws of X^N_t (replication streams under ``seed``)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if t == 0:
        return np.full(reps, float(spec.x0))
    batch = hawkes_engine.simulate_batch(spec, t, [t], reps, seed, track=0, workers=workers)
    return batch.x[:, 0]
