"""Deterministic random streams: SplitMix64 seeding and xoshiro256++.

Every Monte Carlo quantity in the package is derived from a single integer
seed.  Replica ``i`` of a run with seed ``s`` draws from the stream seeded by
``child_seed(s, i)``; Gaussians come from Box-Muller on 53-bit uniforms so the
numbers are reproducible bit-for-bit by any implementation of the same
generator.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix64(x: int) -> int:
    """One SplitMix64 output for input state ``x`` (state advanced by the golden gamma)."""
    return _mix64((x + GOLDEN_GAMMA) & MASK64)


def child_seed(seed: int, index: int) -> int:
    """Seed of the ``index``-th child stream: SplitMix64(seed XOR index*gamma)."""
    seed &= MASK64
    return splitmix64(seed ^ ((index * GOLDEN_GAMMA) & MASK64))


def seed_state(seed: int) -> np.ndarray:
    """xoshiro256++ state from four successive SplitMix64 outputs of ``seed``."""
    x = seed & MASK64
    words = []
    for _ in range(4):
        x = (x + GOLDEN_GAMMA) & MASK64
        words.append(_mix64(x))
    if not any(words):  # all-zero state is a fixed point
        words[0] = 1
    return np.array(words, dtype=np.uint64)


@njit(cache=True, nogil=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True, nogil=True)
def next_u64(s):
    """Advance xoshiro256++ state ``s`` (uint64[4], in place) and return the output."""
    result = _rotl(s[0] + s[3], 23) + s[0]
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(cache=True, nogil=True)
def next_uniform(s):
    """Uniform on [0, 1) with 53 random bits."""
    return float(next_u64(s) >> np.uint64(11)) * _INV_2_53


@njit(cache=True, nogil=True)
def next_uniform_open0(s):
    """Uniform on (0, 1] with 53 random bits (safe for logarithms)."""
    return (float(next_u64(s) >> np.uint64(11)) + 1.0) * _INV_2_53


@njit(cache=True, nogil=True)
def _fill_uniform(s, out):
    for i in range(out.shape[0]):
        out[i] = next_uniform(s)


@njit(cache=True, nogil=True)
def _fill_normal(s, out):
    n = out.shape[0]
    i = 0
    while i < n:
        u1 = next_uniform_open0(s)
        u2 = next_uniform(s)
        r = np.sqrt(-2.0 * np.log(u1))
        out[i] = r * np.cos(_TWO_PI * u2)
        if i + 1 < n:
            out[i + 1] = r * np.sin(_TWO_PI * u2)
        i += 2


class Stream:
    """A xoshiro256++ stream owned by one worker.

    The state array is mutated in place by the numba kernels, so a stream must
    not be shared between threads.
    """

    __slots__ = ("state", "seed")

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self.state = seed_state(self.seed)

    @classmethod
    def child(cls, seed: int, index: int) -> "Stream":
        return cls(child_seed(seed, index))

    def next_u64(self) -> int:
        return int(next_u64(self.state))

    def random(self, size: int | None = None):
        if size is None:
            return float(next_uniform(self.state))
        out = np.empty(int(size))
        _fill_uniform(self.state, out)
        return out

    def normal(self, size: int) -> np.ndarray:
        out = np.empty(int(size))
        _fill_normal(self.state, out)
        return out
