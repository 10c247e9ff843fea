"""Counter-mode seed splitting and a xoshiro256** stream usable from numba kernels.

Stream seeds are derived as ``mix64(master ^ mix64(index + GOLDEN))`` where
``mix64`` is the SplitMix64 finalizer.  Both steps are bijections of the
64-bit words, so distinct replicate indices always map to distinct stream
seeds.  Each stream seed expands into a 256-bit xoshiro256** state through
four successive SplitMix64 outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, uint64

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int (bijective on 64-bit words)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_seed(master: int, index: int) -> int:
    return mix64((master & MASK64) ^ mix64(index + GOLDEN))


@dataclass(frozen=True)
class SeedPolicy:
    master_seed: int

    def seed(self, index: int) -> int:
        return stream_seed(self.master_seed, index)

    def seeds(self, start: int, stop: int) -> np.ndarray:
        return np.array([self.seed(i) for i in range(start, stop)], dtype=np.uint64)


# --- numba side -----------------------------------------------------------

@njit(inline="always")
def _rotl(x, k):
    return (x << uint64(k)) | (x >> uint64(64 - k))


@njit(inline="always")
def _splitmix_next(z):
    z = z + uint64(0x9E3779B97F4A7C15)
    r = z
    r = (r ^ (r >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    r = (r ^ (r >> uint64(27))) * uint64(0x94D049BB133111EB)
    return z, r ^ (r >> uint64(31))


@njit(cache=True)
def seed_state(state, seed):
    z = uint64(seed)
    for i in range(4):
        z, r = _splitmix_next(z)
        state[i] = r
    if state[0] == 0 and state[1] == 0 and state[2] == 0 and state[3] == 0:
        state[0] = uint64(1)


@njit(inline="always")
def next_u64(s):
    result = _rotl(s[1] * uint64(5), 7) * uint64(9)
    t = s[1] << uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(inline="always")
def next_double(s):
    """Uniform on [0, 1) with 53 random bits."""
    return float(next_u64(s) >> uint64(11)) * (1.0 / 9007199254740992.0)


@njit(inline="always")
def next_below(s, n):
    """Exactly uniform integer in [0, n) by rejection on the top bits."""
    n64 = uint64(n)
    limit = uint64(0xFFFFFFFFFFFFFFFF) - (uint64(0xFFFFFFFFFFFFFFFF) % n64)
    while True:
        r = next_u64(s)
        if r < limit:
            return np.int64(r % n64)


@njit(cache=True)
def binomial(s, n, p):
    """Exact-by-inversion Binomial(n, p) draw.

    Small n: sum of Bernoulli trials.  Large n: chop-down inversion starting
    at the mode, walking outward in both directions, so the expected cost is
    O(sqrt(n p (1 - p))).
    """
    if n <= 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return n
    if n < 32:
        k = 0
        for _ in range(n):
            if next_double(s) < p:
                k += 1
        return k
    q = 1.0 - p
    mode = int((n + 1) * p)
    if mode > n:
        mode = n
    logf = (math.lgamma(n + 1.0) - math.lgamma(mode + 1.0) - math.lgamma(n - mode + 1.0)
            + mode * math.log(p) + (n - mode) * math.log(q))
    fm = math.exp(logf)
    u = next_double(s)
    u -= fm
    if u < 0.0:
        return mode
    lo = mode - 1
    hi = mode + 1
    fl = fm
    fh = fm
    ratio = p / q
    while lo >= 0 or hi <= n:
        if hi <= n:
            fh *= (n - hi + 1.0) / hi * ratio
            u -= fh
            if u < 0.0:
                return hi
            hi += 1
        if lo >= 0:
            fl *= (lo + 1.0) / (n - lo) / ratio
            u -= fl
            if u < 0.0:
                return lo
            lo -= 1
    return mode


@njit(cache=True)
def _draw_doubles(seed, n):
    s = np.empty(4, dtype=np.uint64)
    seed_state(s, seed)
    out = np.empty(n)
    for i in range(n):
        out[i] = next_double(s)
    return out


@njit(cache=True)
def _draw_binomials(seed, n, p, count):
    s = np.empty(4, dtype=np.uint64)
    seed_state(s, seed)
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        out[i] = binomial(s, n, p)
    return out


def uniform_doubles(seed: int, n: int) -> np.ndarray:
    return _draw_doubles(np.uint64(seed), n)


def binomial_draws(seed: int, n: int, p: float, count: int) -> np.ndarray:
    return _draw_binomials(np.uint64(seed), n, p, count)
