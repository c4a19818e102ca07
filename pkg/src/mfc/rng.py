"""Counter-based random streams.

Every variate is a pure function of ``(master_seed, purpose, replica,
particle, position)``: a Philox generator is keyed by the seed and a stream
tag, its counter starts at the particle index, and variates are read off in
order.  No state is shared between particles, so any schedule of workers
reproduces the same numbers.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

__all__ = ["SYSTEM", "REFERENCE", "INITIAL", "SUBSAMPLE", "SAMPLER", "CounterStream"]

_MASK64 = (1 << 64) - 1

# stream purposes
SYSTEM = 1
REFERENCE = 2
INITIAL = 3
SUBSAMPLE = 4
SAMPLER = 5


class CounterStream:
    """Independent random stream addressed by (seed, purpose, replica)."""

    def __init__(self, master_seed: int, purpose: int, replica: int = 0):
        if not 0 <= purpose < (1 << 16):
            raise ValueError("purpose must fit in 16 bits")
        if not 0 <= replica < (1 << 48):
            raise ValueError("replica must fit in 48 bits")
        self.master_seed = int(master_seed) & _MASK64
        self.purpose = int(purpose)
        self.replica = int(replica)
        self._key = np.array([self.master_seed, (self.purpose << 48) | self.replica], dtype=np.uint64)

    def raw(self, particle: int, count: int) -> np.ndarray:
        """First ``count`` 64-bit words of sub-stream ``particle``."""
        counter = np.array([0, 0, int(particle) & _MASK64, 0], dtype=np.uint64)
        bitgen = np.random.Philox(counter=counter, key=self._key)
        return bitgen.random_raw(count)

    def uniforms(self, particle: int, count: int) -> np.ndarray:
        """Doubles strictly inside (0, 1), 53 bits each."""
        words = self.raw(particle, count) >> np.uint64(11)
        return (words.astype(np.float64) + 0.5) * 2.0**-53

    def normals(self, particle: int, count: int) -> np.ndarray:
        """Standard normals by inverse CDF of :meth:`uniforms`."""
        return ndtri(self.uniforms(particle, count))

    def generator(self, particle: int = 0) -> np.random.Generator:
        """Numpy generator on sub-stream ``particle``, for non-performance-critical draws."""
        counter = np.array([0, 0, int(particle) & _MASK64, 1], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(counter=counter, key=self._key))
