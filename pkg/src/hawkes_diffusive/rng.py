"""Counter-based random streams.

Every replication owns a stream keyed by ``(master_seed, tag, rep)``.  The
k-th draw of a stream is ``mix64(key + (k + 1) * GOLDEN)``, i.e. the k-th
output of a SplitMix64 generator seeded with ``key``.  A draw depends only
on the key and the counter, never on which worker thread produced it, so
replication-parallel kernels give identical results for any thread count.

All draw helpers are numba-compiled and return ``(value, next_counter)``
so kernels can thread the counter through without hidden state.
"""
from __future__ import annotations

import hashlib
import math

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO_M53 = 1.0 / 9007199254740992.0

# stream tags; the Brownian motion and the Cox measures of the limit system
# must never share randomness with each other or with the N-particle system
TAG_HAWKES = 1
TAG_BROWNIAN = 2
TAG_COX = 3
TAG_OU = 4
TAG_AUX = 5

_U64 = (1 << 64) - 1


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def stream_key(seed, tag, rep):
    """Key of replication ``rep`` for stream family ``tag`` under ``seed``."""
    k = mix64(np.uint64(seed) + GOLDEN)
    k = mix64(k ^ (np.uint64(tag) * _M1))
    return mix64(k + (np.uint64(rep) + _ONE) * GOLDEN)


@njit(cache=True)
def raw64(key, ctr):
    # int64 counters would silently promote to float64 in mixed arithmetic
    c = np.uint64(ctr) + _ONE
    return mix64(np.uint64(key) + c * GOLDEN), c


@njit(cache=True)
def uniform(key, ctr):
    """Uniform on the open interval (0, 1)."""
    z, ctr = raw64(key, ctr)
    return ((z >> _S11) + 0.5) * _TWO_M53, ctr


@njit(cache=True)
def exponential(key, ctr):
    u, ctr = uniform(key, ctr)
    return -math.log(u), ctr


@njit(cache=True)
def normal_pair(key, ctr):
    """Two independent standard normals by Box-Muller (two uniforms)."""
    u1, ctr = uniform(key, ctr)
    u2, ctr = uniform(key, ctr)
    r = math.sqrt(-2.0 * math.log(u1))
    th = 2.0 * math.pi * u2
    return r * math.cos(th), r * math.sin(th), ctr


@njit(cache=True)
def normal(key, ctr):
    z1, _, ctr = normal_pair(key, ctr)
    return z1, ctr


def derive_seed(seed: int, *labels) -> int:
    """A 64-bit sub-seed for one labelled part of an experiment."""
    text = "%d|%s" % (int(seed), "|".join(repr(x) for x in labels))
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


class Stream:
    """A single counter-based stream, for Python-level callers.

    The stream is just ``(key, counter)``; numba kernels take both and
    hand back the advanced counter, which is written back here.
    """

    __slots__ = ("key", "counter")

    def __init__(self, seed: int = 0, tag: int = TAG_AUX, rep: int = 0):
        if not 0 <= int(seed) <= _U64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.key = np.uint64(stream_key(np.uint64(seed), np.uint64(tag), np.uint64(rep)))
        self.counter = np.uint64(0)

    @classmethod
    def from_key(cls, key, counter=0) -> "Stream":
        s = cls.__new__(cls)
        s.key = np.uint64(key)
        s.counter = np.uint64(counter)
        return s

    def uniform(self) -> float:
        u, c = uniform(self.key, self.counter)
        self.counter = np.uint64(c)
        return u

    def exponential(self) -> float:
        e, c = exponential(self.key, self.counter)
        self.counter = np.uint64(c)
        return e

    def normal(self) -> float:
        z, c = normal(self.key, self.counter)
        self.counter = np.uint64(c)
        return z

    def advance(self, counter) -> None:
        self.counter = np.uint64(counter)

    def uniforms(self, n: int) -> np.ndarray:
        out, c = _uniform_block(self.key, self.counter, n)
        self.counter = np.uint64(c)
        return out

    def normals(self, n: int) -> np.ndarray:
        out, c = _normal_block(self.key, self.counter, n)
        self.counter = np.uint64(c)
        return out


@njit(cache=True)
def _uniform_block(key, ctr, n):
    out = np.empty(n)
    for i in range(n):
        out[i], ctr = uniform(key, ctr)
    return out, ctr


@njit(cache=True)
def _normal_block(key, ctr, n):
    out = np.empty(n)
    for i in range(n):
        out[i], ctr = normal(key, ctr)
    return out, ctr
