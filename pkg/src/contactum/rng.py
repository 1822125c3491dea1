"""Portable 64-bit linear congruential generator.

``state <- (A * state + C) mod 2**64``; a uniform double in [0, 1) is the
top 53 bits of the new state times 2**-53. Seeding sets ``state = seed mod
2**64``. Kept deliberately simple so other implementations can reproduce
the exact sample streams.
"""

from __future__ import annotations

import numpy as np

A = 6364136223846793005
C = 1442695040888963407
_MASK = (1 << 64) - 1


class LCG:
    def __init__(self, seed: int = 0):
        self.state = int(seed) & _MASK

    def next_u64(self) -> int:
        self.state = (A * self.state + C) & _MASK
        return self.state

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo, hi) -> np.ndarray:
        """One draw per coordinate, in coordinate order."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        u = np.array([self.random() for _ in range(lo.size)]).reshape(lo.shape)
        return lo + (hi - lo) * u
