"""SplitMix64 generator used for reproducible weight initialization.

The point of rolling our own instead of reaching for numpy's Generator is
cross-implementation reproducibility: SplitMix64 is a tiny, fully specified
algorithm, so any runtime can regenerate bit-identical weight tensors from
the same seed. Floats are derived from the top 53 bits of each output:
``(z >> 11) * 2**-53``, giving a uniform double in [0, 1).
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TO_DOUBLE = 2.0**-53


class SplitMix64:
    """Scalar reference implementation; the vectorized path must match it."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def next_uniform(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * _TO_DOUBLE


def splitmix64_array(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Vectorized SplitMix64 stream: outputs ``offset .. offset+count-1``.

    Identical to calling :meth:`SplitMix64.next_u64` that many times; uint64
    arithmetic wraps mod 2**64 exactly like the scalar version.
    """
    idx = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    z = idx * np.uint64(_GOLDEN) + np.uint64(seed & _MASK64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def uniform_array(seed: int, count: int, low: float, high: float, offset: int = 0) -> np.ndarray:
    """Uniform float64 samples in [low, high) drawn from the seeded stream."""
    u = (splitmix64_array(seed, count, offset) >> np.uint64(11)).astype(np.float64) * _TO_DOUBLE
    return low + u * (high - low)
