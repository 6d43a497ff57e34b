"""Transmitter encoder and per-user decoders.

The encoder maps a (k1 + k2)-bit message pair to one complex symbol: a main
dense stack produces raw I/Q, a small side stack produces a positive
per-symbol gain, and the scaled symbols are power-normalized over either the
current batch (training) or the full codebook (inference/export). Each
receiver maps its equalized sample to per-bit probabilities of its own bits.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigError, DegenerateInputError
from .nn import Mlp, MlpSpec, softplus

NORMALIZATION_MODES = ("batch", "codebook")


def remap_bits(bits) -> np.ndarray:
    """{0,1} -> {-1,+1} network inputs (zero-mean)."""
    return 2.0 * np.asarray(bits, dtype=float) - 1.0


def enumerate_messages(k1: int, k2: int) -> np.ndarray:
    """All 2^(k1+k2) bit rows, bits1-major lexicographic, MSB first."""
    k = k1 + k2
    m = np.arange(2 ** k)
    return ((m[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(np.int64)


def message_indices(bits: np.ndarray) -> np.ndarray:
    """Inverse of enumerate_messages: bit rows -> codebook indices."""
    k = bits.shape[-1]
    weights = 1 << np.arange(k - 1, -1, -1)
    return np.asarray(bits, dtype=np.int64) @ weights


@dataclass(frozen=True)
class MessagePair:
    """The two users' bit vectors forming one super-symbol's payload."""

    bits1: Tuple[int, ...]
    bits2: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bits1", tuple(int(b) for b in self.bits1))
        object.__setattr__(self, "bits2", tuple(int(b) for b in self.bits2))
        if len(self.bits1) < 1 or len(self.bits2) < 1:
            raise ConfigError("each user needs at least one bit")
        if any(b not in (0, 1) for b in self.bits1 + self.bits2):
            raise ConfigError("bits must be 0 or 1")

    @property
    def k1(self) -> int:
        return len(self.bits1)

    @property
    def k2(self) -> int:
        return len(self.bits2)

    def concat(self) -> np.ndarray:
        return np.array(self.bits1 + self.bits2, dtype=np.int64)


def pairs_to_bits(pairs: List[MessagePair]) -> np.ndarray:
    if not pairs:
        raise ConfigError("empty batch")
    k1, k2 = pairs[0].k1, pairs[0].k2
    for p in pairs:
        if p.k1 != k1 or p.k2 != k2:
            raise ConfigError("inconsistent bit widths in batch")
    return np.stack([p.concat() for p in pairs])


@dataclass
class TxEncoder:
    """Message bits -> one complex symbol under an average power budget."""

    k1: int
    k2: int
    symbol_net: Mlp           # (k1+k2) -> 2 raw I/Q
    gain_net: Mlp             # (k1+k2) -> 1; softplus makes the gain positive
    power: float = 1.0
    normalization: str = "batch"

    def __post_init__(self):
        if self.symbol_net.spec.in_dim != self.k1 + self.k2:
            raise ConfigError("symbol net input dim must be k1 + k2")
        if self.symbol_net.spec.out_dim != 2:
            raise ConfigError("symbol net must output exactly (I, Q)")
        if self.gain_net.spec.in_dim != self.k1 + self.k2 or self.gain_net.spec.out_dim != 1:
            raise ConfigError("gain net must map k1 + k2 bits to one scalar")
        if self.normalization not in NORMALIZATION_MODES:
            raise ConfigError(f"normalization must be one of {NORMALIZATION_MODES}")
        if not self.power > 0.0:
            raise ConfigError("power budget must be positive")

    def raw_symbols(self, bits: np.ndarray) -> np.ndarray:
        """Gain-scaled I/Q before power normalization, as complex values."""
        s = remap_bits(bits)
        iq = self.symbol_net.predict(s)
        gain = softplus(self.gain_net.predict(s))
        scaled = gain * iq
        return scaled[:, 0] + 1j * scaled[:, 1]

    def copy(self) -> "TxEncoder":
        return TxEncoder(self.k1, self.k2, self.symbol_net.copy(), self.gain_net.copy(),
                         self.power, self.normalization)


@dataclass
class RxDecoder:
    """Equalized sample -> per-bit probabilities for one user's own bits."""

    index: int                # 1 or 2
    net: Mlp                  # 2 (+1 with gain feature) -> k_index, sigmoid out
    uses_gain_feature: bool = False

    def __post_init__(self):
        if self.index not in (1, 2):
            raise ConfigError("decoder index must be 1 or 2")
        expected_in = 3 if self.uses_gain_feature else 2
        if self.net.spec.in_dim != expected_in:
            raise ConfigError(f"decoder input dim must be {expected_in}")
        if self.net.spec.activations[-1] != "sigmoid":
            raise ConfigError("decoder output layer must be sigmoid")

    @property
    def n_bits(self) -> int:
        return self.net.spec.out_dim

    def features(self, samples: np.ndarray, gain=None) -> np.ndarray:
        """Decoder input rows: (Re z, Im z) plus optionally |h_k|.

        gain may be a scalar or a per-sample array; it is ignored unless the
        decoder was built with the gain feature.
        """
        z = np.asarray(samples, dtype=complex)
        cols = [z.real, z.imag]
        if self.uses_gain_feature:
            if gain is None:
                raise ConfigError("this decoder was built with a gain feature; pass the channel gain")
            g = np.broadcast_to(np.abs(np.asarray(gain, dtype=complex)), z.shape)
            cols.append(g.astype(float))
        return np.stack(cols, axis=-1)

    def copy(self) -> "RxDecoder":
        return RxDecoder(self.index, self.net.copy(), self.uses_gain_feature)


@dataclass
class Codebook:
    """All 2^(k1+k2) message pairs and their normalized symbols, in index order."""

    bits: np.ndarray        # (M, k1+k2)
    symbols: np.ndarray     # (M,) complex
    k1: int
    k2: int
    power_budget: float

    def __post_init__(self):
        m = 2 ** (self.k1 + self.k2)
        if self.bits.shape != (m, self.k1 + self.k2) or self.symbols.shape != (m,):
            raise ConfigError("codebook must cover every message pair exactly once")

    @property
    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.symbols) ** 2))

    @property
    def size(self) -> int:
        return self.symbols.shape[0]

    def pair(self, index: int) -> MessagePair:
        row = self.bits[index]
        return MessagePair(tuple(row[: self.k1]), tuple(row[self.k1:]))

    def entries(self) -> List[Tuple[MessagePair, complex]]:
        return [(self.pair(i), complex(self.symbols[i])) for i in range(self.size)]


def normalize_power(symbols, power: float):
    """Scale symbols so their empirical mean power equals the budget exactly."""
    arr = np.asarray(symbols, dtype=complex)
    if arr.size == 0:
        raise DegenerateInputError("cannot normalize an empty batch")
    total = float(np.sum(arr.real ** 2 + arr.imag ** 2))
    if total == 0.0:
        raise DegenerateInputError("cannot normalize an all-zero batch")
    return arr * np.sqrt(power * arr.size / total)


def codebook_scale(tx: TxEncoder) -> float:
    """Normalization factor computed over the full message set."""
    raw = tx.raw_symbols(enumerate_messages(tx.k1, tx.k2))
    total = float(np.sum(raw.real ** 2 + raw.imag ** 2))
    if total == 0.0:
        raise DegenerateInputError("encoder collapsed: all codebook symbols are zero")
    return float(np.sqrt(tx.power * raw.size / total))


def encode_batch(tx: TxEncoder, pairs, mode: Optional[str] = None) -> np.ndarray:
    """Encode message pairs to normalized complex symbols.

    mode="batch" normalizes over this batch's empirical power; mode="codebook"
    applies the scale computed over all 2^(k1+k2) messages, so repeated calls
    are consistent regardless of batch composition.
    """
    mode = tx.normalization if mode is None else mode
    if mode not in NORMALIZATION_MODES:
        raise ConfigError(f"normalization must be one of {NORMALIZATION_MODES}")
    bits = pairs_to_bits(pairs) if isinstance(pairs, list) else np.asarray(pairs, dtype=np.int64)
    if bits.ndim != 2 or bits.shape[0] == 0:
        raise ConfigError("encode_batch needs a non-empty batch of bit rows")
    if bits.shape[1] != tx.k1 + tx.k2:
        raise ConfigError(f"expected {tx.k1 + tx.k2} bits per row, got {bits.shape[1]}")
    raw = tx.raw_symbols(bits)
    if mode == "batch":
        return normalize_power(raw, tx.power)
    return raw * codebook_scale(tx)


def build_codebook(tx: TxEncoder) -> Codebook:
    """Enumerate every message pair and encode with codebook normalization."""
    bits = enumerate_messages(tx.k1, tx.k2)
    symbols = encode_batch(tx, bits, mode="codebook")
    return Codebook(bits=bits, symbols=symbols, k1=tx.k1, k2=tx.k2, power_budget=tx.power)


def decode_batch(rx: RxDecoder, samples, gain: Optional[complex] = None) -> np.ndarray:
    """Per-bit probabilities, one row per equalized sample."""
    feats = rx.features(np.atleast_1d(np.asarray(samples, dtype=complex)), gain)
    return rx.net.predict(feats)


def decode(rx: RxDecoder, equalized_sample: complex, gain: Optional[complex] = None) -> np.ndarray:
    """Per-bit probabilities for one equalized sample."""
    return decode_batch(rx, [equalized_sample], gain)[0]


def hard_bits(probs) -> np.ndarray:
    """Threshold probabilities at 0.5; an exact 0.5 maps to 1."""
    arr = np.asarray(probs, dtype=float)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ConfigError("probabilities must lie in [0, 1]")
    return (arr >= 0.5).astype(np.int64)


@dataclass
class NomaAutoencoder:
    """The trainable system: one transmitter encoder plus both decoders."""

    tx: TxEncoder
    rx1: RxDecoder
    rx2: RxDecoder

    def __post_init__(self):
        if self.rx1.n_bits != self.tx.k1 or self.rx2.n_bits != self.tx.k2:
            raise ConfigError("decoder output widths must match the users' bit counts")

    @property
    def k1(self) -> int:
        return self.tx.k1

    @property
    def k2(self) -> int:
        return self.tx.k2

    @classmethod
    def initialize(cls, rng, k1: int = 2, k2: int = 2, power: float = 1.0,
                   hidden_width: int = 32, hidden_depth: int = 5,
                   gain_width: int = 16, gain_depth: int = 2,
                   rx_gain_feature: bool = False,
                   normalization: str = "batch") -> "NomaAutoencoder":
        """Fresh Glorot-initialized system with the standard topology.

        The main stacks have `hidden_depth` hidden layers of `hidden_width`
        neurons with identity skips on every width-preserving hidden layer
        (the first hidden layer and the output layer have none).
        """
        def main_spec(in_dim: int, out_dim: int, out_act: str) -> MlpSpec:
            dims = (in_dim,) + (hidden_width,) * hidden_depth + (out_dim,)
            acts = ("elu",) * hidden_depth + (out_act,)
            skips = (False,) + (True,) * (hidden_depth - 1) + (False,)
            return MlpSpec(dims, acts, skips)

        k = k1 + k2
        gain_dims = (k,) + (gain_width,) * gain_depth + (1,)
        gain_spec = MlpSpec(gain_dims, ("elu",) * gain_depth + ("linear",),
                            (False,) * (gain_depth + 1))
        rx_in = 3 if rx_gain_feature else 2
        tx = TxEncoder(
            k1=k1, k2=k2,
            symbol_net=Mlp.initialize(main_spec(k, 2, "linear"), rng),
            gain_net=Mlp.initialize(gain_spec, rng),
            power=power, normalization=normalization,
        )
        rx1 = RxDecoder(1, Mlp.initialize(main_spec(rx_in, k1, "sigmoid"), rng), rx_gain_feature)
        rx2 = RxDecoder(2, Mlp.initialize(main_spec(rx_in, k2, "sigmoid"), rng), rx_gain_feature)
        return cls(tx=tx, rx1=rx1, rx2=rx2)

    def params(self) -> List[np.ndarray]:
        """Every trainable array: tx symbol net, tx gain net, rx1, rx2."""
        return (self.tx.symbol_net.params() + self.tx.gain_net.params()
                + self.rx1.net.params() + self.rx2.net.params())

    def copy(self) -> "NomaAutoencoder":
        return NomaAutoencoder(self.tx.copy(), self.rx1.copy(), self.rx2.copy())
