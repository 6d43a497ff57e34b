"""Seeded, stream-addressable random draws.

A (seed, stream_id) pair fully determines a stream's draw sequence, so
batch generation, channel noise, and Monte-Carlo shards can each own a
stream and be replayed independently. Gaussians come from Box-Muller over
the stream's uniforms; one uniform pair yields one complex noise sample.
"""
from __future__ import annotations

import numpy as np


class RngStream:
    """One reproducible draw sequence, addressed by (seed, stream_id)."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def random(self, size=None):
        """Uniform draws in [0, 1)."""
        return self._gen.random(size)

    def uniform(self, low: float, high: float, size=None):
        return low + (high - low) * self._gen.random(size)

    def bits(self, size):
        """Independent fair bits as int64 zeros and ones."""
        return self._gen.integers(0, 2, size=size, dtype=np.int64)

    def integers(self, high: int, size=None):
        """Uniform integers in [0, high)."""
        return self._gen.integers(0, high, size=size, dtype=np.int64)

    def standard_normal_pair(self, size=None):
        """Two independent N(0,1) arrays via Box-Muller (u1 shifted into (0,1])."""
        u1 = 1.0 - self._gen.random(size)
        u2 = self._gen.random(size)
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        return radius * np.cos(angle), radius * np.sin(angle)

    def complex_gaussian(self, sigma2: float, size=None):
        """Circularly-symmetric complex Gaussian, zero mean, variance sigma2.

        Each real dimension carries sigma2 / 2.
        """
        z_re, z_im = self.standard_normal_pair(size)
        return np.sqrt(sigma2 / 2.0) * (z_re + 1j * z_im)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"
