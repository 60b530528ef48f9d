"""Counter-based random numbers keyed by (seed, pixel, sample, dimension).

Every value is a pure hash of its key, so any subset of samples can be regenerated
in any order, on any worker, with identical results.
"""

from __future__ import annotations

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    x = x + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def hash_key(seed, pixel, sample, dim) -> np.ndarray:
    seed = np.asarray(seed, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        h = _mix(seed & _MASK)
        h = _mix(h ^ np.asarray(pixel, dtype=np.int64).astype(np.uint64))
        h = _mix(h ^ np.asarray(sample, dtype=np.int64).astype(np.uint64))
        h = _mix(h ^ np.asarray(dim, dtype=np.int64).astype(np.uint64))
    return h


def uniform(seed, pixel, sample, dim) -> np.ndarray:
    """Uniform values in [0, 1) with 53 bits of resolution."""
    h = hash_key(seed, pixel, sample, dim)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


class Sampler:
    """Scalar view of the stream for one (seed, pixel, sample) triple."""

    def __init__(self, seed: int, pixel: int = 0, sample: int = 0, dimension: int = 0):
        self.seed = seed
        self.pixel = pixel
        self.sample = sample
        self.dimension = dimension

    def next(self) -> float:
        value = float(uniform(self.seed, self.pixel, self.sample, self.dimension))
        self.dimension += 1
        return value

    def next_2d(self) -> tuple:
        return self.next(), self.next()
