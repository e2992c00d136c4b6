"""Exact event-driven simulation of the N-component system.

Between events X^N follows x e^{-alpha t}; every component fires at rate
f(X^N_{t-}) and each firing moves X^N by u / sqrt(N), u ~ mu.  Since all
components share one intensity, the aggregate process is simulated by
thinning at the dominating rate N F(|x|) (|x| only shrinks along the flow)
and each accepted event is attributed to a uniformly chosen component.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import parallel
from . import rng as _rng
from .model import ModelSpec, draw_mark, rate_envelope, rate_eval

DEFAULT_EVENT_CAP = 10 ** 8

OK = 0
ENVELOPE_VIOLATION = 1
EVENT_CAP = 2
NON_FINITE = 3


class SimulationAbort(RuntimeError):
    """A run could not be completed; carries the replication index."""

    def __init__(self, message, rep=None):
        super().__init__(message)
        self.rep = rep


class EnvelopeViolation(SimulationAbort):
    pass


class EventCapExceeded(SimulationAbort):
    pass


class NonFiniteState(SimulationAbort):
    pass


def _raise_status(status, rep=None, cap=None):
    if status == ENVELOPE_VIOLATION:
        raise EnvelopeViolation("acceptance probability exceeded 1: envelope F does not "
                                "dominate f along the flow", rep)
    if status == EVENT_CAP:
        raise EventCapExceeded("event count exceeded cap %s (runaway intensity)" % cap, rep)
    if status == NON_FINITE:
        raise NonFiniteState("state became non-finite", rep)


@dataclass(frozen=True)
class EventLog:
    times: np.ndarray
    components: np.ndarray  # 1-based
    marks: np.ndarray
    horizon: float
    n_components: int

    def __len__(self) -> int:
        return len(self.times)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "component", "mark"])
            for t, j, u in zip(self.times, self.components, self.marks):
                w.writerow([fmt17(t), int(j), fmt17(u)])


@dataclass(frozen=True)
class SkeletonPath:
    """Anchor times (0 then the event times) and post-jump values."""

    times: np.ndarray
    values: np.ndarray
    alpha: float
    horizon: float
    n_components: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x_post"])
            for t, x in zip(self.times, self.values):
                w.writerow([fmt17(t), fmt17(x)])


def fmt17(v) -> str:
    return "%.17g" % v


@njit(cache=True, nogil=True)
def _path_kernel(rc, rp, mc, mp, alpha, n, x0, horizon, key, ctr, cap):
    size = 1024
    times = np.empty(size)
    comps = np.empty(size, np.int64)
    marks = np.empty(size)
    post = np.empty(size)
    sqn = math.sqrt(n)
    s = 0.0
    x = x0
    m = 0
    status = OK
    while True:
        env = rate_envelope(rc, rp, abs(x))
        e, ctr = _rng.exponential(key, ctr)
        s_new = s + e / (n * env)
        if s_new > horizon:
            break
        x = x * math.exp(-alpha * (s_new - s))
        s = s_new
        u, ctr = _rng.uniform(key, ctr)
        fx = rate_eval(rc, rp, x)
        if fx > env * (1.0 + 1e-12):
            status = ENVELOPE_VIOLATION
            break
        if u * env <= fx:
            mark, ctr = draw_mark(mc, mp, key, ctr)
            v, ctr = _rng.uniform(key, ctr)
            j = int(v * n) + 1
            if j > n:
                j = n
            if m >= cap:
                status = EVENT_CAP
                break
            if m == size:
                size *= 2
                times = _grow(times, size)
                comps = _grow_int(comps, size)
                marks = _grow(marks, size)
                post = _grow(post, size)
            x = x + mark / sqn
            times[m] = s
            comps[m] = j
            marks[m] = mark
            post[m] = x
            m += 1
            if not math.isfinite(x):
                status = NON_FINITE
                break
    return times[:m].copy(), comps[:m].copy(), marks[:m].copy(), post[:m].copy(), status, ctr


@njit(cache=True)
def _grow(a, size):
    out = np.empty(size)
    out[:a.shape[0]] = a
    return out


@njit(cache=True)
def _grow_int(a, size):
    out = np.empty(size, np.int64)
    out[:a.shape[0]] = a
    return out


def _path_python(spec: ModelSpec, horizon: float, stream: _rng.Stream, cap: int):
    """Same scheme and draw order as the compiled kernel, for user-defined
    rate functions or mark laws."""
    f, mu, n, alpha = spec.f, spec.mu, spec.n_components, spec.alpha
    sqn = math.sqrt(n)
    s, x = 0.0, float(spec.x0)
    times, comps, marks, post = [], [], [], []
    while True:
        env = float(f.envelope(abs(x)))
        s_new = s + stream.exponential() / (n * env)
        if s_new > horizon:
            break
        x = x * math.exp(-alpha * (s_new - s))
        s = s_new
        u = stream.uniform()
        fx = float(f(x))
        if fx > env * (1.0 + 1e-12):
            _raise_status(ENVELOPE_VIOLATION)
        if u * env <= fx:
            mark = mu.sample(stream)
            j = min(int(stream.uniform() * n) + 1, n)
            if len(times) >= cap:
                _raise_status(EVENT_CAP, cap=cap)
            x = x + mark / sqn
            times.append(s)
            comps.append(j)
            marks.append(mark)
            post.append(x)
            if not math.isfinite(x):
                _raise_status(NON_FINITE)
    return (np.array(times, dtype=np.float64), np.array(comps, dtype=np.int64),
            np.array(marks, dtype=np.float64), np.array(post, dtype=np.float64))


def _compiled(spec: ModelSpec) -> bool:
    return spec.f.code >= 0 and spec.mu.code >= 0


def simulate(spec: ModelSpec, horizon: float, stream: _rng.Stream,
             cap: int = DEFAULT_EVENT_CAP, force_python: bool = False):
    """One exact sample of X^N and all Z^{N,i} on [0, horizon].

    Returns ``(SkeletonPath, EventLog)``; ``stream`` is advanced.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if _compiled(spec) and not force_python:
        t, j, u, xp, status, ctr = _path_kernel(
            spec.f.code, spec.f.param_array, spec.mu.code, spec.mu.param_array,
            float(spec.alpha), int(spec.n_components), float(spec.x0), float(horizon),
            stream.key, stream.counter, int(cap))
        stream.advance(ctr)
        _raise_status(status, cap=cap)
    else:
        t, j, u, xp = _path_python(spec, float(horizon), stream, int(cap))
    path = SkeletonPath(np.concatenate(([0.0], t)), np.concatenate(([float(spec.x0)], xp)),
                        float(spec.alpha), float(horizon), int(spec.n_components))
    log = EventLog(t, j, u, float(horizon), int(spec.n_components))
    return path, log


def state_at(path: SkeletonPath, t, left: bool = False):
    """X(t) by exact decay from the last anchor at or before t.

    At an event time the post-jump value is returned unless ``left`` is set,
    in which case X(t-) is returned.
    """
    ts = np.asarray(t, dtype=np.float64)
    if np.any(ts < 0) or np.any(ts > path.horizon) or np.any(~np.isfinite(ts)):
        raise ValueError("t outside [0, horizon]")
    side = "left" if left else "right"
    k = np.searchsorted(path.times, ts, side=side) - 1
    k = np.maximum(k, 0)
    out = path.values[k] * np.exp(-path.alpha * (ts - path.times[k]))
    return float(out) if out.ndim == 0 else out


class CountingPath:
    """Step function t -> number of events of one component up to time t."""

    def __init__(self, jump_times: np.ndarray, horizon: float):
        self.jump_times = np.asarray(jump_times, dtype=np.float64)
        self.horizon = horizon

    def __call__(self, t):
        c = np.searchsorted(self.jump_times, np.asarray(t, dtype=np.float64), side="right")
        return int(c) if np.ndim(c) == 0 else c

    def __repr__(self) -> str:
        return "CountingPath(%d jumps on [0, %g])" % (len(self.jump_times), self.horizon)


def counting_paths(log: EventLog, k: int) -> list:
    """Z^{N,1..k}; components beyond N get the zero path."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return [CountingPath(log.times[log.components == i], log.horizon) for i in range(1, k + 1)]


# ---------------------------------------------------------------------------
# replication batches


@njit(cache=True, nogil=True)
def _batch_kernel(rc, rp, mc, mp, alpha, n, x0, horizon, sample_times, track, seed,
                  start, stop, cap, out_x, out_counts, out_total, out_status):
    sqn = math.sqrt(n)
    nt = sample_times.shape[0]
    for r in range(start, stop):
        key = _rng.stream_key(seed, _rng.TAG_HAWKES, r)
        ctr = np.uint64(0)
        s = 0.0
        x = x0
        m = 0
        it = 0
        status = OK
        while True:
            env = rate_envelope(rc, rp, abs(x))
            e, ctr = _rng.exponential(key, ctr)
            s_new = s + e / (n * env)
            while it < nt and sample_times[it] < s_new:
                out_x[r, it] = x * math.exp(-alpha * (sample_times[it] - s))
                it += 1
            if s_new > horizon:
                break
            x = x * math.exp(-alpha * (s_new - s))
            s = s_new
            u, ctr = _rng.uniform(key, ctr)
            fx = rate_eval(rc, rp, x)
            if fx > env * (1.0 + 1e-12):
                status = ENVELOPE_VIOLATION
                break
            if u * env <= fx:
                mark, ctr = draw_mark(mc, mp, key, ctr)
                v, ctr = _rng.uniform(key, ctr)
                j = int(v * n) + 1
                if j > n:
                    j = n
                if m >= cap:
                    status = EVENT_CAP
                    break
                x = x + mark / sqn
                m += 1
                if j <= track:
                    out_counts[r, j - 1] += 1
                if not math.isfinite(x):
                    status = NON_FINITE
                    break
        out_total[r] = m
        out_status[r] = status


@dataclass
class HawkesBatch:
    """Per-replication outputs: X^N at ``sample_times``, the counts
    Z^{N,1..track}(horizon), and total event counts."""

    sample_times: np.ndarray
    x: np.ndarray
    counts: np.ndarray
    totals: np.ndarray

    @property
    def reps(self) -> int:
        return self.x.shape[0]


def simulate_batch(spec: ModelSpec, horizon: float, sample_times, reps: int, seed: int,
                   track: int = 2, cap: int = DEFAULT_EVENT_CAP, workers=None) -> HawkesBatch:
    """``reps`` independent runs; replication r uses stream (seed, HAWKES, r)."""
    st = np.sort(np.asarray(sample_times, dtype=np.float64).ravel())
    if st.size == 0:
        st = np.array([float(horizon)])
    if st[0] < 0 or st[-1] > horizon:
        raise ValueError("sample times must lie in [0, horizon]")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    out_x = np.empty((reps, st.size))
    out_counts = np.zeros((reps, max(track, 1)), dtype=np.int64)
    out_total = np.zeros(reps, dtype=np.int64)
    out_status = np.zeros(reps, dtype=np.int64)
    seed64 = np.uint64(seed)

    if _compiled(spec):
        args = (spec.f.code, spec.f.param_array, spec.mu.code, spec.mu.param_array,
                float(spec.alpha), int(spec.n_components), float(spec.x0), float(horizon),
                st, int(track), seed64)

        def fill(a, b):
            _batch_kernel(*args, a, b, int(cap), out_x, out_counts, out_total, out_status)
    else:
        def fill(a, b):
            for r in range(a, b):
                stream = _rng.Stream(seed, _rng.TAG_HAWKES, r)
                path, log = simulate(spec, horizon, stream, cap)
                out_x[r] = state_at(path, st)
                out_total[r] = len(log)
                for i in range(track):
                    out_counts[r, i] = int(np.count_nonzero(log.components == i + 1))

    parallel.run_chunked(fill, reps, workers)
    bad = np.flatnonzero(out_status)
    if bad.size:
        _raise_status(int(out_status[bad[0]]), rep=int(bad[0]), cap=cap)
    return HawkesBatch(st, out_x, out_counts[:, :track], out_total)
