"""Deterministic pseudo-random numbers for channel models.

The generator is splitmix64: the state advances by the 64-bit golden-gamma
constant 0x9E3779B97F4A7C15 and each output is mixed with two xorshift-multiply
rounds (multipliers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB, shifts 30/27/31).
Pure integer arithmetic, so an identical seed yields an identical draw sequence
on every platform.
"""

MASK64 = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


class Rng:
    """splitmix64 stream seeded with a 64-bit value."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & MASK64
        return _mix(self._state)

    def next_float(self) -> float:
        """Uniform in [0, 1): the top 53 bits of a draw over 2**53."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def next_below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    @staticmethod
    def fork(seed: int, index: int) -> "Rng":
        """Child generator number `index` of a root seed.

        The child seed is the index-th output of a splitmix64 stream seeded
        with `seed`, computed directly, so child streams never depend on how
        many siblings exist.
        """
        if index < 0:
            raise ValueError("index must be non-negative")
        state = (seed + (index + 1) * _GAMMA) & MASK64
        return Rng(_mix(state))
