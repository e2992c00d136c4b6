"""Replication-parallel execution.

Kernels fill disjoint slices ``[start, stop)`` of preallocated output arrays;
replication ``r`` always draws from the stream keyed by ``(seed, tag, r)``,
so the worker count changes wall time only.  Reductions are done afterwards
on the full arrays, in index order.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_VAR = "HAWKES_DIFFUSIVE_WORKERS"
_workers = None


def get_workers() -> int:
    if _workers is not None:
        return _workers
    env = os.environ.get(ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def set_workers(k) -> None:
    global _workers
    _workers = None if k is None else max(1, int(k))


def chunk_bounds(reps: int, workers: int) -> list:
    n_chunks = max(1, min(reps, 4 * workers))
    edges = [reps * i // n_chunks for i in range(n_chunks + 1)]
    return [(edges[i], edges[i + 1]) for i in range(n_chunks) if edges[i] < edges[i + 1]]


def run_chunked(fill, reps: int, workers=None) -> None:
    """Call ``fill(start, stop)`` over a partition of ``range(reps)``."""
    workers = get_workers() if workers is None else max(1, int(workers))
    bounds = chunk_bounds(reps, workers)
    if workers == 1 or len(bounds) == 1:
        for a, b in bounds:
            fill(a, b)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for fut in [pool.submit(fill, a, b) for a, b in bounds]:
            fut.result()
