"""Deterministic SplitMix64 randomness.

All weights and synthetic episodes are derived from this generator so that a
build is a pure function of (config, seed).  SplitMix64 advances a Weyl
sequence ``state_n = seed + (n+1) * GOLDEN mod 2**64`` and scrambles each state
with two xor-multiply rounds; because the state sequence is closed-form, whole
batches of draws vectorize over numpy uint64 arithmetic.

Constants: GOLDEN = 0x9E3779B97F4A7C15, mix multipliers 0xBF58476D1CE4E5B9 and
0x94D049BB133111EB.  Uniform doubles take the top 53 bits of each output.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1
_INV_2_53 = 2.0 ** -53

def _wrap():
    # numpy intentionally wraps uint64 arithmetic; silence the overflow
    # warning locally instead of globally (errstate objects are single-use).
    return np.errstate(over="ignore")


def mix64(z: np.ndarray | int) -> np.ndarray | np.uint64:
    """SplitMix64 output scrambler, elementwise over uint64."""
    z = np.uint64(z) if np.isscalar(z) else z.astype(np.uint64, copy=True)
    with _wrap():
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Sequential view over the SplitMix64 stream seeded by ``seed``.

    ``take(n)`` returns the next ``n`` uniforms in [0, 1) as float64; draws are
    positionally stable, so consumers that document their draw order are
    reproducible bit for bit.
    """

    def __init__(self, seed: int):
        if not 0 <= int(seed) <= _MASK64:
            raise ValueError("seed must fit in 64 bits")
        self._seed = np.uint64(int(seed))
        self._pos = 0

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._pos + 1, self._pos + n + 1, dtype=np.uint64)
        self._pos += n
        with _wrap():
            state = self._seed + idx * GOLDEN
        return mix64(state)

    def take(self, n: int) -> np.ndarray:
        """Next n uniforms in [0, 1)."""
        bits = self._raw(n) >> np.uint64(11)
        return bits.astype(np.float64) * _INV_2_53

    def uniform(self, n: int, bound: float) -> np.ndarray:
        """Next n uniforms in [-bound, bound)."""
        return (2.0 * self.take(n) - 1.0) * bound

    def normal(self, n: int) -> np.ndarray:
        """Next n standard normals via Box-Muller.

        Consumes ceil(n/2) pairs of uniforms; u1 is shifted into (0, 1] so the
        log never sees zero.
        """
        pairs = (n + 1) // 2
        bits = self._raw(2 * pairs) >> np.uint64(11)
        u = bits.astype(np.float64)
        u1 = (u[:pairs] + 1.0) * _INV_2_53
        u2 = u[pairs:] * _INV_2_53
        radius = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.concatenate([radius * np.cos(theta), radius * np.sin(theta)])
        return out[:n]


def derive_seed(base_seed: int, index: int) -> int:
    """Seed for the ``index``-th sub-stream (episodes, sweeps) of ``base_seed``."""
    with _wrap():
        state = np.uint64(base_seed) + np.uint64(index + 1) * GOLDEN
    return int(mix64(state))
