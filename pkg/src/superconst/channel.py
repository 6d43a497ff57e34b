"""Two-user downlink AWGN channel: y_k = h_k * x + n_k.

User 1 is the weak user (|h1|^2 <= |h2|^2). One noise variance sigma2 is
shared by both receivers; SNR sweeps rescale sigma2 while the transmit
power budget stays fixed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .rng import RngStream

__all__ = [
    "ChannelRealization",
    "ChannelDistribution",
    "RngStream",
    "snr_to_sigma2",
    "snr2_from",
    "apply_channel",
    "equalize",
    "sample_h2",
]


@dataclass(frozen=True)
class ChannelRealization:
    """Fixed gains plus the shared per-sample complex noise variance."""

    h1: complex
    h2: complex
    sigma2: float

    def __post_init__(self):
        if abs(self.h1) ** 2 > abs(self.h2) ** 2:
            raise ConfigError(
                f"user 1 must be the weak user: |h1|^2={abs(self.h1) ** 2:.6g} "
                f"> |h2|^2={abs(self.h2) ** 2:.6g}"
            )
        if not self.sigma2 > 0.0:
            raise ConfigError("sigma2 must be positive")

    def gain(self, user: int) -> complex:
        if user == 1:
            return self.h1
        if user == 2:
            return self.h2
        raise ConfigError(f"user must be 1 or 2, got {user!r}")


@dataclass(frozen=True)
class ChannelDistribution:
    """How the strong user's gain h2 is drawn; h1 stays fixed.

    kind="fixed" uses h2_fixed; kind="uniform" draws h2 ~ Unif[h2_min, h2_max].
    """

    kind: str
    h1: complex = 1.0
    h2_fixed: Optional[float] = None
    h2_min: Optional[float] = None
    h2_max: Optional[float] = None

    def __post_init__(self):
        if self.kind == "fixed":
            if self.h2_fixed is None:
                raise ConfigError("fixed distribution needs h2_fixed")
            if abs(self.h2_fixed) < abs(self.h1):
                raise ConfigError("|h2| must be >= |h1| (user ordering)")
        elif self.kind == "uniform":
            if self.h2_min is None or self.h2_max is None:
                raise ConfigError("uniform distribution needs h2_min and h2_max")
            if self.h2_min > self.h2_max:
                raise ConfigError("h2_min must not exceed h2_max")
            if self.h2_min < abs(self.h1):
                raise ConfigError("h2_min must be >= |h1| so user ordering survives sampling")
        else:
            raise ConfigError(f"unknown channel distribution kind {self.kind!r}")

    @classmethod
    def fixed(cls, h1: complex, h2: float) -> "ChannelDistribution":
        return cls(kind="fixed", h1=h1, h2_fixed=h2)

    @classmethod
    def uniform(cls, h1: complex, h2_min: float, h2_max: float) -> "ChannelDistribution":
        return cls(kind="uniform", h1=h1, h2_min=h2_min, h2_max=h2_max)


def snr_to_sigma2(snr1_db: float, h1: complex, power: float) -> float:
    """Noise variance realizing a target SNR at user 1: |h1|^2 * P / 10^(snr/10)."""
    if not power > 0.0:
        raise ConfigError("power must be positive")
    if h1 == 0:
        raise ConfigError("h1 must be nonzero")
    return abs(h1) ** 2 * power / 10.0 ** (snr1_db / 10.0)


def snr2_from(snr1_db: float, h1: complex, h2: complex) -> float:
    """Strong user's SNR implied by the shared noise floor: snr1 + 20*log10(|h2|/|h1|)."""
    if h1 == 0 or h2 == 0:
        raise ConfigError("gains must be nonzero")
    return snr1_db + 20.0 * np.log10(abs(h2) / abs(h1))


def apply_channel(x, realization: ChannelRealization, user: int, rng: RngStream):
    """h_k * x plus circularly-symmetric complex Gaussian noise of variance sigma2."""
    arr = np.asarray(x, dtype=complex)
    h = realization.gain(user)
    noise = rng.complex_gaussian(realization.sigma2, arr.shape if arr.ndim else None)
    return h * arr + noise


def equalize(y, h_k: complex):
    """Express the received sample in transmit coordinates: y / h_k."""
    if h_k == 0:
        raise ConfigError("cannot equalize with a zero channel gain")
    return np.asarray(y, dtype=complex) / h_k


def sample_h2(dist: ChannelDistribution, rng: RngStream, size=None):
    """Draw h2 per the distribution; size=None yields a scalar."""
    if dist.kind == "fixed":
        if size is None:
            return float(dist.h2_fixed)
        return np.full(size, float(dist.h2_fixed))
    draws = rng.uniform(dist.h2_min, dist.h2_max, size)
    return float(draws) if size is None else draws
