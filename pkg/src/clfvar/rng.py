"""Seeded random number generation.

All randomness in the package flows through :class:`SeededRng`, a
xoshiro256** generator whose 256-bit state is filled from the seed with
splitmix64.  Both algorithms are the published reference versions, so the
streams can be reproduced in any language.
"""

import math

import numpy as np

from . import _accel

MASK64 = 0xFFFFFFFFFFFFFFFF
_TWO_POW_M53 = 1.0 / 9007199254740992.0


def splitmix64(x):
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return x, z ^ (z >> 31)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK64


def _next_py(s):
    """One xoshiro256** step on a 4-element list of Python ints (in place)."""
    result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
    t = (s[1] << 17) & MASK64
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


def _below_py(s, bound):
    # Rejection on the low residue class keeps the result unbiased.
    threshold = ((1 << 64) - bound) % bound
    draws = 0
    while True:
        r = _next_py(s)
        draws += 1
        if r >= threshold:
            return r % bound, draws


def _shuffle_py(s, n):
    perm = list(range(n))
    draws = 0
    for i in range(n - 1, 0, -1):
        j, d = _below_py(s, i + 1)
        draws += d
        perm[i], perm[j] = perm[j], perm[i]
    return np.array(perm, dtype=np.int64), draws


@_accel.njit
def _next_nb(s):
    s1 = s[1]
    x = s1 * np.uint64(5)
    x = (x << np.uint64(7)) | (x >> np.uint64(57))
    result = x * np.uint64(9)
    t = s1 << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s3 = s[3]
    s[3] = (s3 << np.uint64(45)) | (s3 >> np.uint64(19))
    return result


@_accel.njit
def _shuffle_nb(s, n):
    perm = np.arange(n)
    draws = 0
    for i in range(n - 1, 0, -1):
        bound = np.uint64(i + 1)
        threshold = (np.uint64(0) - bound) % bound
        while True:
            r = _next_nb(s)
            draws += 1
            if r >= threshold:
                break
        j = np.int64(r % bound)
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
    return perm, draws


class SeededRng:
    """Deterministic generator confined to one experiment run.

    ``draw_count`` counts raw 64-bit outputs consumed so far.
    """

    def __init__(self, seed):
        seed = int(seed)
        if not 0 <= seed <= MASK64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        x = seed
        state = []
        for _ in range(4):
            x, out = splitmix64(x)
            state.append(out)
        self._s = state
        self.draw_count = 0
        self._spare = None

    @property
    def state(self):
        return tuple(self._s)

    def next_u64(self):
        self.draw_count += 1
        return _next_py(self._s)

    def uniform(self):
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * _TWO_POW_M53

    def below(self, bound):
        """Unbiased integer in ``[0, bound)``."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        value, draws = _below_py(self._s, bound)
        self.draw_count += draws
        return value

    def gaussian(self, mean=0.0, std=1.0):
        """Box-Muller draw; the second variate of each pair is used next."""
        if std < 0:
            raise ValueError(f"std must be non-negative, got {std}")
        if self._spare is not None:
            z = self._spare
            self._spare = None
        else:
            u1 = 1.0 - self.uniform()  # (0, 1], keeps log finite
            u2 = self.uniform()
            radius = math.sqrt(-2.0 * math.log(u1))
            angle = 2.0 * math.pi * u2
            z = radius * math.cos(angle)
            self._spare = radius * math.sin(angle)
        return mean + std * z

    def gaussian_array(self, shape, mean=0.0, std=1.0):
        size = int(np.prod(shape, dtype=np.int64))
        out = np.empty(size, dtype=np.float64)
        for k in range(size):
            out[k] = self.gaussian(mean, std)
        return out.reshape(shape)

    def shuffle(self, n):
        """Fisher-Yates permutation of ``0..n-1``."""
        if n < 0:
            raise ValueError("n must be non-negative")
        if _accel.USE_NUMBA:
            s = np.array(self._s, dtype=np.uint64)
            perm, draws = _shuffle_nb(s, n)
            self._s = [int(v) for v in s]
        else:
            perm, draws = _shuffle_py(self._s, n)
        self.draw_count += int(draws)
        return perm

    def sample_indices(self, n, k):
        """``k`` distinct indices from ``0..n-1``, sorted ascending."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot draw {k} of {n} without replacement")
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return np.array(sorted(pool[:k]), dtype=np.int64)


def new_rng(seed):
    return SeededRng(seed)


def shuffle(rng, n):
    return rng.shuffle(n)


def gaussian(rng, mean, std):
    return rng.gaussian(mean, std)
