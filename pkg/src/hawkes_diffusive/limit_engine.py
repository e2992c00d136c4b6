"""Simulation of the limit diffusion dX = -alpha X dt + sigma sqrt(f(X)) dB
and of the Cox counting processes driven by f(X).

Euler-Maruyama draws normals in pairs (z1, z2): the fine path (step h/2)
uses them one at a time and the coarse path (step h) uses
(z1 + z2)/sqrt(2), so both paths share one Brownian motion.  This gives a
low-variance estimate of the step-size bias (Richardson guard).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from . import parallel
from . import rng as _rng
from .hawkes_engine import NON_FINITE, OK, NonFiniteState, fmt17
from .model import ModelSpec, RateFunction, rate_eval

DEFAULT_H = 1e-3
_INV_SQRT2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class GridPath:
    times: np.ndarray
    values: np.ndarray
    h: Optional[float]
    alpha: float
    sigma: float
    f: Optional[RateFunction] = None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x"])
            for t, x in zip(self.times, self.values):
                w.writerow([fmt17(t), fmt17(x)])


@dataclass(frozen=True)
class CoxLog:
    """Event times per component (index i holds component i + 1)."""

    times: list
    horizon: float

    @property
    def k(self) -> int:
        return len(self.times)

    def counts(self) -> np.ndarray:
        return np.array([len(t) for t in self.times])

    def to_csv(self, path) -> None:
        rows = sorted((t, i + 1) for i, ts in enumerate(self.times) for t in ts)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "component"])
            for t, i in rows:
                w.writerow([fmt17(t), i])


def n_steps(T: float, h: float) -> int:
    return int(math.ceil(T / h - 1e-9))


def em_step(x, alpha, sigma, fx, h, xi):
    """One Euler-Maruyama step from x with f(x) = fx and normal draw xi."""
    return x - alpha * x * h + sigma * math.sqrt(fx * h) * xi


@njit(cache=True, nogil=True)
def _em_path_kernel(rc, rp, alpha, sigma, x0, h, nsteps, key, ctr):
    out = np.empty(nsteps + 1)
    out[0] = x0
    x = x0
    sh = math.sqrt(h)
    status = OK
    for k in range(nsteps):
        z1, z2, ctr = _rng.normal_pair(key, ctr)
        xi = (z1 + z2) * _INV_SQRT2
        x = x - alpha * x * h + sigma * math.sqrt(rate_eval(rc, rp, x)) * sh * xi
        out[k + 1] = x
        if not math.isfinite(x):
            status = NON_FINITE
            out[k + 2:] = np.nan
            break
    return out, status, ctr


def simulate_em(spec: ModelSpec, T: float, h: float, stream: _rng.Stream,
                sigma: Optional[float] = None) -> GridPath:
    """Euler-Maruyama path on the grid kh, k = 0..ceil(T/h).

    ``sigma`` overrides the mark-law standard deviation (sigma = 0 gives the
    deterministic recursion, for testing).
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    if spec.f.code < 0:
        raise ValueError("simulate_em needs a builtin rate function")
    sig = spec.sigma if sigma is None else float(sigma)
    m = n_steps(T, h)
    vals, status, ctr = _em_path_kernel(spec.f.code, spec.f.param_array, float(spec.alpha),
                                        sig, float(spec.x0), float(h), m, stream.key,
                                        stream.counter)
    stream.advance(ctr)
    if status != OK:
        raise NonFiniteState("Euler-Maruyama state became non-finite (step too large?)")
    return GridPath(np.arange(m + 1) * h, vals, float(h), float(spec.alpha), sig, spec.f)


@njit(cache=True, nogil=True)
def _ou_kernel(alpha, sigma, x0, times, key, ctr):
    out = np.empty(times.shape[0])
    x = x0
    t_prev = times[0]
    for i in range(times.shape[0]):
        dt = times[i] - t_prev
        if dt > 0:
            decay = math.exp(-alpha * dt)
            sd = sigma * math.sqrt(-math.expm1(-2.0 * alpha * dt) / (2.0 * alpha))
            z, ctr = _rng.normal(key, ctr)
            x = x * decay + sd * z
        out[i] = x
        t_prev = times[i]
    return out, ctr


def simulate_ou_exact(alpha: float, sigma: float, x0: float, times, stream: _rng.Stream) -> GridPath:
    """Exact Gaussian transitions of dX = -alpha X dt + sigma dB.

    ``times`` is sorted; the path value at the first time is x0.
    """
    ts = np.asarray(times, dtype=np.float64)
    if np.any(np.diff(ts) < 0):
        raise ValueError("times must be sorted")
    vals, ctr = _ou_kernel(float(alpha), float(sigma), float(x0), ts, stream.key, stream.counter)
    stream.advance(ctr)
    return GridPath(ts, vals, None, float(alpha), float(sigma), None)


@njit(cache=True, nogil=True)
def _cox_kernel(rc, rp, values, h, ncells, k, key, ctr):
    total = 0
    cap = 64
    t_out = np.empty(cap)
    c_out = np.empty(cap, np.int64)
    for i in range(k):
        for c in range(ncells):
            lam = rate_eval(rc, rp, values[c])
            t0 = c * h
            t = t0
            while True:
                e, ctr = _rng.exponential(key, ctr)
                t += e / lam
                if t >= t0 + h:
                    break
                if total == cap:
                    cap *= 2
                    tt = np.empty(cap)
                    tt[:total] = t_out[:total]
                    t_out = tt
                    cc = np.empty(cap, np.int64)
                    cc[:total] = c_out[:total]
                    c_out = cc
                t_out[total] = t
                c_out[total] = i
                total += 1
    return t_out[:total].copy(), c_out[:total].copy(), ctr


def cox_counts(path: GridPath, k: int, stream: _rng.Stream, f: Optional[RateFunction] = None) -> CoxLog:
    """k conditionally independent Cox processes with intensity f(X(kh))
    frozen on each cell [kh, (k+1)h)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    f = f or path.f
    if path.h is None:
        raise ValueError("cox_counts needs a uniform grid path")
    ncells = len(path.values) - 1
    t, comp, ctr = _cox_kernel(f.code, f.param_array, path.values, float(path.h), ncells,
                               int(k), stream.key, stream.counter)
    stream.advance(ctr)
    horizon = ncells * path.h
    return CoxLog([t[comp == i] for i in range(k)], float(horizon))


# ---------------------------------------------------------------------------
# replication batches


@njit(cache=True, nogil=True)
def _em_batch_kernel(rc, rp, alpha, sigma, x0, h, nsteps, sample_idx, cox_k, seed, start,
                     stop, out_coarse, out_fine, out_int_c, out_int_f, out_cox, out_status):
    hf = 0.5 * h
    sh = math.sqrt(h)
    shf = math.sqrt(hf)
    ns = sample_idx.shape[0]
    for r in range(start, stop):
        key = _rng.stream_key(seed, _rng.TAG_BROWNIAN, r)
        ctr = np.uint64(0)
        xc = x0
        xf = x0
        ic = 0.0
        iff = 0.0
        it = 0
        status = OK
        while it < ns and sample_idx[it] == 0:
            out_coarse[r, it] = x0
            out_fine[r, it] = x0
            it += 1
        for k in range(nsteps):
            z1, z2, ctr = _rng.normal_pair(key, ctr)
            fc = rate_eval(rc, rp, xc)
            ic += fc * h
            xc = xc - alpha * xc * h + sigma * math.sqrt(fc) * sh * (z1 + z2) * _INV_SQRT2
            ff = rate_eval(rc, rp, xf)
            iff += ff * hf
            xf = xf - alpha * xf * hf + sigma * math.sqrt(ff) * shf * z1
            ff = rate_eval(rc, rp, xf)
            iff += ff * hf
            xf = xf - alpha * xf * hf + sigma * math.sqrt(ff) * shf * z2
            while it < ns and sample_idx[it] == k + 1:
                out_coarse[r, it] = xc
                out_fine[r, it] = xf
                it += 1
            if not (math.isfinite(xc) and math.isfinite(xf)):
                status = NON_FINITE
                break
        out_int_c[r] = ic
        out_int_f[r] = iff
        out_status[r] = status
        if cox_k > 0:
            # given the frozen intensity path each count is Poisson(int f)
            ckey = _rng.stream_key(seed, _rng.TAG_COX, r)
            cctr = np.uint64(0)
            for i in range(cox_k):
                t = 0.0
                n = 0
                while True:
                    e, cctr = _rng.exponential(ckey, cctr)
                    t += e
                    if t > ic:
                        break
                    n += 1
                out_cox[r, i] = n


@dataclass
class EMBatch:
    """Per-replication coarse (step h) and fine (step h/2) values at
    ``sample_times`` plus left-endpoint Riemann sums of f(X) over [0, T]."""

    sample_times: np.ndarray
    h: float
    coarse: np.ndarray
    fine: np.ndarray
    integral_coarse: np.ndarray
    integral_fine: np.ndarray
    cox_counts: np.ndarray

    @property
    def reps(self) -> int:
        return self.coarse.shape[0]


def simulate_em_batch(spec: ModelSpec, T: float, h: float, sample_times, reps: int, seed: int,
                      cox_k: int = 0, sigma: Optional[float] = None, workers=None) -> EMBatch:
    """``reps`` coupled coarse/fine Euler-Maruyama paths; replication r uses
    stream (seed, BROWNIAN, r) and its Cox counts stream (seed, COX, r)."""
    if not h > 0:
        raise ValueError("step h must be positive")
    if spec.f.code < 0:
        raise ValueError("Euler-Maruyama batches need a builtin rate function")
    st = np.sort(np.asarray(sample_times, dtype=np.float64).ravel())
    m = n_steps(T, h)
    idx = np.rint(st / h).astype(np.int64)
    if np.any(np.abs(idx * h - st) > 1e-9 * max(1.0, T)) or np.any(idx > m) or np.any(idx < 0):
        raise ValueError("sample times must be grid points kh within [0, T]")
    sig = spec.sigma if sigma is None else float(sigma)
    out_c = np.empty((reps, st.size))
    out_f = np.empty((reps, st.size))
    int_c = np.empty(reps)
    int_f = np.empty(reps)
    cox = np.zeros((reps, max(cox_k, 1)), dtype=np.int64)
    status = np.zeros(reps, dtype=np.int64)
    args = (spec.f.code, spec.f.param_array, float(spec.alpha), sig, float(spec.x0), float(h),
            m, idx, int(cox_k), np.uint64(seed))

    def fill(a, b):
        _em_batch_kernel(*args, a, b, out_c, out_f, int_c, int_f, cox, status)

    parallel.run_chunked(fill, reps, workers)
    bad = np.flatnonzero(status)
    if bad.size:
        raise NonFiniteState("Euler-Maruyama state became non-finite (step too large?)",
                             int(bad[0]))
    return EMBatch(st, float(h), out_c, out_f, int_c, int_f, cox[:, :cox_k])


@njit(cache=True, nogil=True)
def _ou_batch_kernel(alpha, sigma, x0, times, seed, start, stop, out):
    for r in range(start, stop):
        key = _rng.stream_key(seed, _rng.TAG_OU, r)
        vals, _ = _ou_kernel(alpha, sigma, x0, times, key, np.uint64(0))
        out[r, :] = vals


def simulate_ou_batch(alpha, sigma, x0, times, reps, seed, workers=None) -> np.ndarray:
    ts = np.asarray(times, dtype=np.float64)
    out = np.empty((reps, ts.size))

    def fill(a, b):
        _ou_batch_kernel(float(alpha), float(sigma), float(x0), ts, np.uint64(seed), a, b, out)

    parallel.run_chunked(fill, reps, workers)
    return out
