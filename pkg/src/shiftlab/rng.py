"""Counter-based deterministic pseudorandom generator.

All randomness in this package flows through :class:`CounterRng` so that
every artifact (shift plans, synthetic weights, mask trajectories, golden
files) is reproducible bit-for-bit from a seed, across runs and across
machines.  The generator is a keyed SplitMix64: the i-th output is a pure
function of (key, i), so independent streams are cheap -- derive a new key
from (seed, stream labels) and never share mutable state.

We deliberately do not use numpy's Generator API here: its method-level
streams are allowed to change between numpy versions, which would break
golden-file regression.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    """SplitMix64 finalizer: avalanche a 64-bit word."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _key_part(part) -> int:
    if isinstance(part, str):
        return int.from_bytes(hashlib.blake2b(part.encode(), digest_size=8).digest(), "little")
    return int(part) & _MASK


class CounterRng:
    """Deterministic stream keyed by (seed, *stream).

    `stream` labels (ints or strings) separate independent streams, e.g.
    ``CounterRng(seed, "plan", layer_id, edge, channel)``.
    """

    def __init__(self, seed: int, *stream) -> None:
        key = _mix(int(seed) & _MASK)
        for i, part in enumerate(stream):
            key = _mix(key ^ _mix(_key_part(part) + (i + 1) * _GOLDEN))
        self._key = key
        self._ctr = 0

    def next_u64(self) -> int:
        v = _mix(self._key + self._ctr * _GOLDEN)
        self._ctr += 1
        return v

    def next_float(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_float()

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n). Multiply-shift map, no rejection."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        return (self.next_u64() * n) >> 64

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates permutation of range(n)."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def sample(self, population: list, k: int) -> list:
        """k distinct elements, order-stable in the population's order."""
        if k > len(population):
            raise ValueError("sample larger than population")
        idx = self.permutation(len(population))[:k]
        return [population[i] for i in sorted(idx)]

    def uniform_array(self, shape, lo: float, hi: float, dtype=np.float64) -> np.ndarray:
        """Array of uniforms in [lo, hi), identical to repeated uniform() calls.

        Vectorized over the counter; the stream position advances by the
        element count so scalar and array draws interleave consistently.
        """
        n = int(np.prod(shape)) if shape else 1
        ctrs = (np.uint64(self._key) + (np.arange(self._ctr, self._ctr + n, dtype=np.uint64))
                * np.uint64(_GOLDEN))
        self._ctr += n
        z = ctrs
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
        u = (z >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        return (lo + (hi - lo) * u).reshape(shape).astype(dtype)
