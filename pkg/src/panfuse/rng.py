"""Deterministic pseudo-random numbers (SplitMix64).

Every stochastic choice in this package (weight init, epoch shuffling,
sample picking) runs off this generator so that a run is reproducible
bit-for-bit from a single 64-bit seed, independent of platform or numpy
version.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """SplitMix64 stream (Vigna's reference constants).

    state advances by the golden-ratio increment; each output is the
    mixed state. The first outputs for seed 0 are
    0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK

    @property
    def state(self) -> int:
        return self._state

    def next_uint64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return _mix(self._state)

    def uint64_array(self, n: int) -> np.ndarray:
        """Next n outputs, computed in bulk.

        The state sequence is closed-form (state_i = seed + i*gamma mod 2^64),
        so the whole block vectorizes; the scalar state is advanced past it.
        """
        start = self._state
        idx = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(start) + idx * np.uint64(_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self._state = (start + n * _GAMMA) & _MASK
        return z

    def uniform(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_uint64() >> 11) * 2.0 ** -53

    def normals(self, n: int) -> np.ndarray:
        """n standard-normal float64 draws via Box-Muller.

        Consumes 2*ceil(n/2) raw outputs; u1 is shifted into (0, 1] so the
        log never sees zero.
        """
        pairs = (n + 1) // 2
        raw = self.uint64_array(2 * pairs).reshape(pairs, 2)
        u1 = ((raw[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53
        u2 = (raw[:, 1] >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound). Simple modulo; the tiny modulo
        bias is irrelevant for shuffling but the result is deterministic."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_uint64() % bound

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


def stream_for(seed: int, label: int) -> SplitMix64:
    """Independent sub-stream for (seed, label), e.g. one per epoch."""
    return SplitMix64(_mix((seed + label * _GAMMA) & _MASK))
