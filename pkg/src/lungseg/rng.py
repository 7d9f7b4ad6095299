"""Seeded splitmix64 random stream.

All stochastic choices in the pipeline (weight init, dataset splits, batch
shuffling, phantom geometry) draw from this one generator so results are
bit-identical across platforms and NumPy versions.
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *streams: int) -> int:
    """Fold stream indices into a seed, so sub-streams never collide."""
    z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        for s in streams:
            z = _mix((z + _GAMMA) ^ np.uint64(s & 0xFFFFFFFFFFFFFFFF))
    return int(z)


class SplitMix64:
    """Counter-based splitmix64 stream with numpy-friendly bulk draws."""

    def __init__(self, seed: int):
        self._state = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)

    def next_uint64(self, n: int) -> np.ndarray:
        old = np.errstate(over="ignore")
        with old:
            states = self._state + _GAMMA * np.arange(1, n + 1, dtype=np.uint64)
            self._state = self._state + _GAMMA * np.uint64(n)
            return _mix(states)

    def uniform(self, n: int = None):
        """Uniform doubles in [0, 1); scalar when n is None, else an array."""
        if n is None:
            return float((self.next_uint64(1) >> np.uint64(11))[0] * (2.0 ** -53))
        return (self.next_uint64(n) >> np.uint64(11)) * (2.0 ** -53)

    def uniform_range(self, lo: float, hi: float, n: int = None):
        return lo + (hi - lo) * self.uniform(n)

    def normal(self, n: int, sigma: float = 1.0) -> np.ndarray:
        """n gaussian draws via Box-Muller."""
        m = (n + 1) // 2
        u1 = self.uniform(m)
        u2 = self.uniform(m)
        u1 = np.maximum(u1, 2.0 ** -53)  # keep log finite
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return sigma * out[:n]

    def randint(self, lo: int, hi: int) -> int:
        """One integer in [lo, hi). Uses rejection-free modulo (bias < 2^-40 here)."""
        span = hi - lo
        return lo + int(self.next_uint64(1)[0] % np.uint64(span))

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.randint(0, i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
