"""Deterministic counter-based random number generation.

The generator is splitmix64: draw ``i`` mixes the state ``seed + (i+1) * GAMMA``
through two xor-shift-multiply rounds. Because each output depends only on the
seed and the draw index, the stream is reproducible bit-for-bit on every
platform and can be generated in vectorized blocks.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 2.0 ** -53


def _mix(z: np.ndarray) -> np.ndarray:
    # Wraparound modulo 2**64 is the algorithm, not an accident.
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


class SplitMix(object):
    """Stateful view over the splitmix64 counter stream for one seed."""

    def __init__(self, seed: int):
        self.seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self.counter = 0

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit draws."""
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _mix(self.seed + idx * _GAMMA)

    def uniform(self, shape=()) -> np.ndarray:
        """Uniform float64 in [0, 1) with 53-bit resolution."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * _U53
        return u.reshape(shape) if shape else float(u[0])

    def normal(self, shape=()) -> np.ndarray:
        """Standard normals via Box-Muller on open-interval uniforms."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        m = (n + 1) // 2
        # (raw >> 11) + 0.5 keeps u1 strictly inside (0, 1) so log is finite.
        u1 = ((self.raw(m) >> np.uint64(11)).astype(np.float64) + 0.5) * _U53
        u2 = (self.raw(m) >> np.uint64(11)).astype(np.float64) * _U53
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])[:n]
        return z.reshape(shape) if shape else float(z[0])

    def truncated_normal(self, shape, std=1.0, limit=2.0) -> np.ndarray:
        """Normals with rejection outside ``limit`` sigma, then scaled by std."""
        z = self.normal(shape).reshape(-1)
        bad = np.abs(z) > limit
        while bad.any():
            z[bad] = self.normal((int(bad.sum()),))
            bad = np.abs(z) > limit
        return (z * std).reshape(shape)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        """Integers in [low, high). Uses the uniform stream (toy-scale use)."""
        u = self.uniform(shape if shape else (1,))
        out = (np.floor(u * (high - low)) + low).astype(np.int64)
        return out.reshape(shape) if shape else int(out[0])

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) by sorting uniform keys."""
        return np.argsort(self.uniform((n,)), kind="stable")

    def spawn(self, stream: int) -> "SplitMix":
        """Independent child generator derived from this seed and a stream id."""
        with np.errstate(over="ignore"):
            tag = _mix(self.seed + np.uint64(stream + 1) * _MIX1)
        return SplitMix(int(tag))
