"""Reference systems: superposed Gray-QPSK with hard SIC at the strong user,
Gray-coded 16-QAM, and maximum-likelihood detection over arbitrary codebooks.

Closed forms here are derived per real dimension and are only trusted after
agreeing with the Monte-Carlo simulators in this module; the simulators, not
the algebra, are the ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import erfc

from .errors import ConfigError
from .model import Codebook, MessagePair, enumerate_messages
from .rng import RngStream

MC_CHUNK = 1_000_000


def q_function(x):
    """Gaussian tail probability Q(x) = P(N(0,1) > x) = erfc(x / sqrt(2)) / 2."""
    arr = np.asarray(x, dtype=float)
    out = 0.5 * erfc(arr / np.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class QpskNomaConfig:
    """Superposed QPSK operating point; alpha is the weak user's power share."""

    alpha: float
    sigma2: float
    power: float = 1.0
    h1: float = 1.0
    h2: float = 2.0
    allow_overlap: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must lie in (0, 1]")
        if self.alpha <= 0.5 and not self.allow_overlap:
            raise ConfigError(
                "alpha <= 0.5 superimposes overlapping/reordered symbols; "
                "set allow_overlap to compute anyway"
            )
        if not (self.power > 0.0 and self.sigma2 > 0.0):
            raise ConfigError("power and sigma2 must be positive")
        if abs(self.h1) > abs(self.h2):
            raise ConfigError("user 1 must be the weak user (|h1| <= |h2|)")

    @classmethod
    def at_snr1(cls, snr1_db: float, alpha: float = 0.7, power: float = 1.0,
                h1: float = 1.0, h2: float = 2.0, allow_overlap: bool = False) -> "QpskNomaConfig":
        sigma2 = abs(h1) ** 2 * power / 10.0 ** (snr1_db / 10.0)
        return cls(alpha=alpha, sigma2=sigma2, power=power, h1=h1, h2=h2,
                   allow_overlap=allow_overlap)


@dataclass(frozen=True)
class PerDimAmplitudes:
    """Per-real-dimension amplitudes of the superposed QPSK constellation."""

    a1: float       # weak user's amplitude sqrt(alpha * P / 2)
    a2: float       # strong user's amplitude sqrt((1 - alpha) * P / 2)
    sigma_d: float  # per-dimension noise std sqrt(sigma2 / 2)

    @classmethod
    def from_config(cls, cfg: QpskNomaConfig) -> "PerDimAmplitudes":
        return cls(
            a1=np.sqrt(cfg.alpha * cfg.power / 2.0),
            a2=np.sqrt((1.0 - cfg.alpha) * cfg.power / 2.0),
            sigma_d=np.sqrt(cfg.sigma2 / 2.0),
        )


def ber_qpsk_noma_weak(cfg: QpskNomaConfig) -> float:
    """Weak user's exact per-bit BER, interference treated as part of the signal.

    Per dimension the composite level is +-a1 +- a2; the weak bit is the sign
    of the a1 component, so BER = [Q(h1(a1+a2)/sd) + Q(h1(a1-a2)/sd)] / 2.
    """
    amp = PerDimAmplitudes.from_config(cfg)
    h = abs(cfg.h1)
    return 0.5 * (q_function(h * (amp.a1 + amp.a2) / amp.sigma_d)
                  + q_function(h * (amp.a1 - amp.a2) / amp.sigma_d))


def ber_qpsk_noma_strong_sic(cfg: QpskNomaConfig) -> float:
    """Strong user's exact per-bit BER under hard-decision SIC per dimension.

    With x1 = h2*a1/sd and x2 = h2*a2/sd, conditioning on the weak symbol sign
    and on the SIC decision region gives
        Q(x2) + [Q(2x1+x2) - Q(x1+x2) + Q(x1-x2) - Q(2x1-x2)] / 2.
    """
    amp = PerDimAmplitudes.from_config(cfg)
    h = abs(cfg.h2)
    x1 = h * amp.a1 / amp.sigma_d
    x2 = h * amp.a2 / amp.sigma_d
    return q_function(x2) + 0.5 * (q_function(2 * x1 + x2) - q_function(x1 + x2)
                                   + q_function(x1 - x2) - q_function(2 * x1 - x2))


def mc_qpsk_noma(cfg: QpskNomaConfig, n_symbols: int, rng: RngStream,
                 chunk: int = MC_CHUNK) -> Tuple[float, float, float, float]:
    """Simulate superposed Gray-QPSK: weak user slices directly, strong user
    detects and subtracts the weak symbol, then slices its own.

    Returns (ber1, ber2, stderr1, stderr2) with binomial standard errors.
    """
    if n_symbols < 10_000:
        raise ConfigError("need at least 1e4 symbols for a meaningful estimate")
    amp = PerDimAmplitudes.from_config(cfg)
    errors1 = 0
    errors2 = 0
    done = 0
    while done < n_symbols:
        n = min(chunk, n_symbols - done)
        bits = rng.bits((n, 4))
        # Gray QPSK per user: bit 0 -> +amplitude on that dimension.
        s1 = amp.a1 * ((1 - 2 * bits[:, 0]) + 1j * (1 - 2 * bits[:, 1]))
        s2 = amp.a2 * ((1 - 2 * bits[:, 2]) + 1j * (1 - 2 * bits[:, 3]))
        x = s1 + s2

        z1 = x + rng.complex_gaussian(cfg.sigma2, n) / cfg.h1
        errors1 += int(np.sum((z1.real < 0) != bits[:, 0]))
        errors1 += int(np.sum((z1.imag < 0) != bits[:, 1]))

        z2 = x + rng.complex_gaussian(cfg.sigma2, n) / cfg.h2
        weak_est = amp.a1 * (np.sign(z2.real) + 1j * np.sign(z2.imag))
        resid = z2 - weak_est
        errors2 += int(np.sum((resid.real < 0) != bits[:, 2]))
        errors2 += int(np.sum((resid.imag < 0) != bits[:, 3]))
        done += n

    n_bits = 2 * n_symbols
    ber1 = errors1 / n_bits
    ber2 = errors2 / n_bits
    stderr1 = np.sqrt(ber1 * (1.0 - ber1) / n_bits)
    stderr2 = np.sqrt(ber2 * (1.0 - ber2) / n_bits)
    return ber1, ber2, stderr1, stderr2


def ber_16qam(snr_symbol_db: float) -> float:
    """Exact Gray-coded 16-QAM per-bit BER at the given symbol SNR.

    Per dimension this is 4-PAM on levels {+-1, +-3}/sqrt(10) with two Gray
    bits; averaging the sign bit and the inner/outer bit gives
    [3Q(A) + 2Q(3A) - Q(5A)] / 4 with A = sqrt(SNR / 5).
    """
    snr = 10.0 ** (snr_symbol_db / 10.0)
    a = np.sqrt(snr / 5.0)
    return 0.25 * (3.0 * q_function(a) + 2.0 * q_function(3.0 * a) - q_function(5.0 * a))


# Gray labels along one 4-PAM axis: index by the two bits (b_high, b_low).
_PAM4_GRAY_LEVELS = {(0, 0): -3.0, (0, 1): -1.0, (1, 1): 1.0, (1, 0): 3.0}


def gray_16qam_codebook(power: float = 1.0) -> Codebook:
    """Reference Gray 16-QAM as a labeled codebook (bits1 on I, bits2 on Q)."""
    bits = enumerate_messages(2, 2)
    levels = np.array([_PAM4_GRAY_LEVELS[(int(r[0]), int(r[1]))] for r in bits[:, :2]])
    levels_q = np.array([_PAM4_GRAY_LEVELS[(int(r[0]), int(r[1]))] for r in bits[:, 2:]])
    symbols = (levels + 1j * levels_q) * np.sqrt(power / 10.0)
    return Codebook(bits=bits, symbols=symbols, k1=2, k2=2, power_budget=power)


def mc_ber_16qam(snr_symbol_db: float, n_symbols: int, rng: RngStream,
                 chunk: int = MC_CHUNK) -> Tuple[float, float]:
    """Monte-Carlo Gray 16-QAM BER via nearest-symbol detection.

    Returns (ber, stderr).
    """
    if n_symbols < 10_000:
        raise ConfigError("need at least 1e4 symbols for a meaningful estimate")
    cb = gray_16qam_codebook(power=1.0)
    sigma2 = 10.0 ** (-snr_symbol_db / 10.0)
    errors = 0
    done = 0
    while done < n_symbols:
        n = min(chunk, n_symbols - done)
        idx = rng.integers(cb.size, size=n)
        y = cb.symbols[idx] + rng.complex_gaussian(sigma2, n)
        d2 = np.abs(y[:, None] - cb.symbols[None, :]) ** 2
        det = np.argmin(d2, axis=1)
        errors += int(np.sum(cb.bits[idx] != cb.bits[det]))
        done += n
    n_bits = 4 * n_symbols
    ber = errors / n_bits
    return ber, np.sqrt(ber * (1.0 - ber) / n_bits)


def ml_detect_indices(y, codebook: Codebook, h: complex) -> np.ndarray:
    """Indices of the codebook entries minimizing |y - h*x|^2 (ties -> lowest)."""
    if h == 0:
        raise ConfigError("channel gain must be nonzero")
    z = np.atleast_1d(np.asarray(y, dtype=complex)) / h
    d2 = np.abs(z[:, None] - codebook.symbols[None, :]) ** 2
    return np.argmin(d2, axis=1)


def ml_detect(y: complex, codebook: Codebook, h: complex) -> MessagePair:
    """Maximum-likelihood message decision for one received sample."""
    idx = int(ml_detect_indices(np.array([y]), codebook, h)[0])
    return codebook.pair(idx)
