"""Counter-based random streams for reproducible simulation.

Every draw is a pure function of (seed, step, draw index), so the
randomness consumed at step k can be audited independently of execution
order: re-running a step, or running steps out of order, yields the same
values.  The generator is a splitmix64-style bit mixer; it is not meant
for cryptography, only for statistically decent reproducible streams.
"""

from __future__ import annotations

import math

__all__ = ["StepRng", "CounterRng"]

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    """splitmix64 finalizer: avalanching 64-bit hash."""
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class StepRng:
    """Random draws for one simulation step.

    Draws are indexed 0, 1, 2, ... within the step; the i-th draw equals
    _mix(base + i*GOLDEN) where base is derived from (seed, step).
    """

    __slots__ = ("_base", "_i")

    def __init__(self, seed: int, step: int):
        self._base = _mix(_mix(seed & _MASK) ^ _mix(step & _MASK))
        self._i = 0

    def _next_u64(self) -> int:
        u = _mix((self._base + self._i * _GOLDEN) & _MASK)
        self._i += 1
        return u

    def integers(self, n: int) -> int:
        """Uniform draw from {0, ..., n-1}.

        Uses a plain modulo reduction; the bias is ~n/2**64 and irrelevant
        for the small n used here.
        """
        if n <= 0:
            raise ValueError("n must be positive")
        return self._next_u64() % n

    def uniform(self) -> float:
        """Uniform draw from [0, 1)."""
        return self._next_u64() * 2.0**-64

    def normal(self) -> float:
        """Standard normal draw (Box-Muller, no spare caching)."""
        u1 = self._next_u64()
        u2 = self._next_u64()
        # u1 shifted so log() never sees zero
        r = math.sqrt(-2.0 * math.log((u1 + 1) * 2.0**-64))
        return r * math.cos(2.0 * math.pi * u2 * 2.0**-64)


class CounterRng:
    """Factory of per-step streams for a fixed seed."""

    __slots__ = ("seed",)

    def __init__(self, seed: int):
        self.seed = int(seed)

    def step(self, k: int) -> StepRng:
        return StepRng(self.seed, k)
