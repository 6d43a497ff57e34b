"""Learned super-constellations for two-user downlink NOMA.

A transmitter encoder and two per-user decoders are trained end to end
through a shared AWGN channel so that the 2^(k1+k2)-point super-constellation
stays decodable at both receivers without successive interference
cancellation. Closed-form superposed-QPSK and 16-QAM baselines plus a
Monte-Carlo BER harness make the result measurable.
"""

from .channel import (ChannelDistribution, ChannelRealization, apply_channel,
                      equalize, sample_h2, snr2_from, snr_to_sigma2)
from .errors import (ConfigError, DegenerateInputError, NoDataError,
                     NumericError, SuperconstError, TrainingError)
from .model import (Codebook, MessagePair, NomaAutoencoder, RxDecoder,
                    TxEncoder, build_codebook, decode, encode_batch,
                    hard_bits, normalize_power)
from .rng import RngStream
from .training import (Checkpoint, LossBreakdown, TrainingConfig,
                       adaptive_weights, bce, preset_config, train)

__version__ = "0.1.0"

__all__ = [
    "ChannelDistribution", "ChannelRealization", "apply_channel", "equalize",
    "sample_h2", "snr2_from", "snr_to_sigma2",
    "ConfigError", "DegenerateInputError", "NoDataError", "NumericError",
    "SuperconstError", "TrainingError",
    "Codebook", "MessagePair", "NomaAutoencoder", "RxDecoder", "TxEncoder",
    "build_codebook", "decode", "encode_batch", "hard_bits", "normalize_power",
    "RngStream",
    "Checkpoint", "LossBreakdown", "TrainingConfig", "adaptive_weights",
    "bce", "preset_config", "train",
    "__version__",
]
