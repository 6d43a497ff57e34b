"""End-to-end training of the encoder and both decoders.

Each step samples a fresh batch of message pairs and channel gains, runs
bits -> symbols -> noisy channel -> equalized samples -> per-bit
probabilities, forms the adaptively weighted binary cross-entropy total,
and applies one Adam update. User 1's loss backpropagates into its own
decoder and the transmitter only, user 2's likewise; the adaptive weights
are recomputed every batch from the detached losses.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from .channel import ChannelDistribution, sample_h2, snr_to_sigma2
from .errors import ConfigError, NumericError, TrainingError
from .model import NomaAutoencoder, remap_bits
from .nn import AdamState, adam_step, flatten_layer_grads, sigmoid, softplus
from .rng import RngStream

PROB_CLAMP = 1e-12

# Stream ids carved out of the training seed.
_STREAM_INIT = 0
_STREAM_BITS = 1
_STREAM_CHANNEL = 2
_STREAM_NOISE = 3


@dataclass(frozen=True)
class TrainingConfig:
    """Everything one training run depends on."""

    iterations: int
    channel: ChannelDistribution
    loss_weight: float = 10.0
    batch_size: int = 1024
    snr1_train_db: float = 10.0
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    normalization: str = "batch"
    k1: int = 2
    k2: int = 2
    power: float = 1.0
    rx_gain_feature: bool = False
    history_every: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be positive")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.loss_weight < 1.0:
            raise ConfigError("loss_weight must be >= 1")
        if self.history_every < 1:
            raise ConfigError("history_every must be positive")
        if self.k1 < 1 or self.k2 < 1:
            raise ConfigError("bit widths must be positive")

    @property
    def sigma2(self) -> float:
        return snr_to_sigma2(self.snr1_train_db, self.channel.h1, self.power)


# The three published operating points. Paper-scale budget; override
# iterations for desk-scale runs.
PRESETS = {
    "case1": dict(channel=ChannelDistribution.fixed(1.0, 2.0), loss_weight=10.0,
                  iterations=150_000),
    "case2": dict(channel=ChannelDistribution.uniform(1.0, 1.0, 3.0), loss_weight=20.0,
                  iterations=150_000),
    "case3": dict(channel=ChannelDistribution.uniform(1.0, 8.0, 12.0), loss_weight=15.0,
                  iterations=150_000),
}


def preset_config(name: str, **overrides) -> TrainingConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    fields = dict(PRESETS[name])
    fields.update(overrides)
    return TrainingConfig(**fields)


def bce(targets, probs) -> float:
    """-sum_j [t_j ln p_j + (1-t_j) ln(1-p_j)], probabilities clamped to
    [1e-12, 1-1e-12] before the logs."""
    t = np.asarray(targets, dtype=float)
    p = np.asarray(probs, dtype=float)
    if t.shape != p.shape:
        raise ConfigError(f"targets shape {t.shape} != probs shape {p.shape}")
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.sum(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc)))


def bce_batch(targets: np.ndarray, probs: np.ndarray) -> float:
    """Mean over the batch of per-row bit-vector cross-entropies."""
    return bce(targets, probs) / targets.shape[0]


def adaptive_weights(loss1: float, loss2: float, w: float) -> Tuple[float, float]:
    """(w, 1) when user 1 is currently worse (ties included), else (1, w)."""
    if w < 1.0:
        raise ConfigError("loss weight must be >= 1")
    if not (np.isfinite(loss1) and np.isfinite(loss2)):
        raise NumericError("non-finite loss")
    return (w, 1.0) if loss1 >= loss2 else (1.0, w)


@dataclass(frozen=True)
class LossBreakdown:
    loss1: float
    loss2: float
    w1: float
    w2: float
    total: float

    @classmethod
    def build(cls, loss1: float, loss2: float, w1: float, w2: float) -> "LossBreakdown":
        return cls(loss1, loss2, w1, w2, w1 * loss1 + w2 * loss2)


@dataclass
class Checkpoint:
    """A trained (or in-progress) system plus how it got there."""

    system: NomaAutoencoder
    config: TrainingConfig
    iteration: int
    # rows: (iteration, loss1, loss2, w1, w2, total)
    history: np.ndarray


@dataclass
class TrainBatch:
    """One step's sampled inputs; noise is pre-drawn so the step is a pure map."""

    bits1: np.ndarray        # (N, k1)
    bits2: np.ndarray        # (N, k2)
    h1: complex
    h2: np.ndarray           # (N,) per-element strong-user gains
    sigma2: float
    noise1: np.ndarray       # (N,) complex
    noise2: np.ndarray       # (N,) complex


def sample_batch(config: TrainingConfig, rng_bits: RngStream, rng_channel: RngStream,
                 rng_noise: RngStream, size: Optional[int] = None) -> TrainBatch:
    n = config.batch_size if size is None else size
    bits = rng_bits.bits((n, config.k1 + config.k2))
    h2 = sample_h2(config.channel, rng_channel, size=n)
    sigma2 = config.sigma2
    return TrainBatch(
        bits1=bits[:, : config.k1],
        bits2=bits[:, config.k1:],
        h1=config.channel.h1,
        h2=np.asarray(h2, dtype=complex),
        sigma2=sigma2,
        noise1=rng_noise.complex_gaussian(sigma2, n),
        noise2=rng_noise.complex_gaussian(sigma2, n),
    )


@dataclass
class _ForwardState:
    s: np.ndarray            # (N, k1+k2) remapped inputs
    tape_symbol: object
    tape_gain: object
    gain_raw: np.ndarray     # (N, 1) pre-softplus
    gain: np.ndarray         # (N, 1)
    iq_raw: np.ndarray       # (N, 2) symbol-net output
    scaled: np.ndarray       # (N, 2) gain * raw I/Q
    scale: float             # batch normalization factor
    total_power: float       # sum of squared entries of `scaled`
    tapes_rx: Tuple[object, object]
    probs: Tuple[np.ndarray, np.ndarray]
    loss1: float
    loss2: float


def _system_forward(system: NomaAutoencoder, batch: TrainBatch) -> _ForwardState:
    tx = system.tx
    s = remap_bits(np.concatenate([batch.bits1, batch.bits2], axis=1))
    iq_raw, tape_symbol = tx.symbol_net.forward(s)
    gain_raw, tape_gain = tx.gain_net.forward(s)
    gain = softplus(gain_raw)
    scaled = gain * iq_raw
    n = scaled.shape[0]
    total_power = float(np.sum(scaled * scaled))
    if total_power == 0.0:
        raise NumericError("encoder emitted an all-zero batch")
    scale = float(np.sqrt(tx.power * n / total_power))
    x = scale * (scaled[:, 0] + 1j * scaled[:, 1])

    tapes, probs, losses = [], [], []
    for rx, bits, h, noise in ((system.rx1, batch.bits1, batch.h1, batch.noise1),
                               (system.rx2, batch.bits2, batch.h2, batch.noise2)):
        y = h * x + noise
        z = y / h
        feats = rx.features(z, gain=h)
        p, tape = rx.net.forward(feats)
        tapes.append(tape)
        probs.append(p)
        losses.append(bce_batch(bits, p))

    return _ForwardState(
        s=s, tape_symbol=tape_symbol, tape_gain=tape_gain,
        gain_raw=gain_raw, gain=gain, iq_raw=iq_raw, scaled=scaled,
        scale=scale, total_power=total_power,
        tapes_rx=(tapes[0], tapes[1]), probs=(probs[0], probs[1]),
        loss1=losses[0], loss2=losses[1],
    )


@dataclass
class SystemGrads:
    """Gradients grouped by component, each in Mlp.params() order."""

    tx_symbol: List[np.ndarray]
    tx_gain: List[np.ndarray]
    rx1: List[np.ndarray]
    rx2: List[np.ndarray]

    def flat(self) -> List[np.ndarray]:
        return self.tx_symbol + self.tx_gain + self.rx1 + self.rx2


def _bce_prob_grad(bits: np.ndarray, probs: np.ndarray, weight: float) -> np.ndarray:
    """d(weight * mean-row-sum BCE)/dprobs with the forward clamp applied."""
    n = bits.shape[0]
    pc = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return weight * (pc - bits) / (pc * (1.0 - pc)) / n


def _system_backward(system: NomaAutoencoder, batch: TrainBatch, fw: _ForwardState,
                     w1: float, w2: float) -> SystemGrads:
    rx_grads = []
    dx = np.zeros_like(fw.scaled)
    for rx, bits, tape, probs, weight in ((system.rx1, batch.bits1, fw.tapes_rx[0], fw.probs[0], w1),
                                          (system.rx2, batch.bits2, fw.tapes_rx[1], fw.probs[1], w2)):
        if weight == 0.0:
            rx_grads.append([np.zeros_like(p) for p in rx.net.params()])
            continue
        dprobs = _bce_prob_grad(bits, probs, weight)
        layer_grads, dfeat = rx.net.backward(tape, dprobs)
        rx_grads.append(flatten_layer_grads(layer_grads))
        # equalized sample is x + noise/h, so dz/dx is the identity; the
        # optional |h| feature is constant w.r.t. the parameters.
        dx += dfeat[:, :2]

    # Normalization backward: x = c(s) * s with c = sqrt(P*N / sum(s^2)).
    inner = float(np.sum(dx * fw.scaled))
    dscaled = fw.scale * (dx - fw.scaled * (inner / fw.total_power))

    diq = fw.gain * dscaled
    dgain = np.sum(dscaled * fw.iq_raw, axis=1, keepdims=True)
    dgain_raw = sigmoid(fw.gain_raw) * dgain

    symbol_layer_grads, _ = system.tx.symbol_net.backward(fw.tape_symbol, diq)
    gain_layer_grads, _ = system.tx.gain_net.backward(fw.tape_gain, dgain_raw)
    return SystemGrads(
        tx_symbol=flatten_layer_grads(symbol_layer_grads),
        tx_gain=flatten_layer_grads(gain_layer_grads),
        rx1=rx_grads[0],
        rx2=rx_grads[1],
    )


def system_loss(system: NomaAutoencoder, batch: TrainBatch,
                weights: Tuple[float, float]) -> float:
    """Total weighted loss for a frozen batch; the gradient-checker closure."""
    fw = _system_forward(system, batch)
    return weights[0] * fw.loss1 + weights[1] * fw.loss2


def system_loss_and_grads(system: NomaAutoencoder, batch: TrainBatch,
                          weights: Optional[Tuple[float, float]] = None,
                          loss_weight: float = 1.0) -> Tuple[LossBreakdown, SystemGrads]:
    """One forward/backward over a frozen batch.

    With weights=None the adaptive rule picks (w, 1) or (1, w) from the
    detached losses; explicit weights freeze the comparison (finite
    differences need that).
    """
    fw = _system_forward(system, batch)
    if weights is None:
        w1, w2 = adaptive_weights(fw.loss1, fw.loss2, loss_weight)
    else:
        w1, w2 = weights
    grads = _system_backward(system, batch, fw, w1, w2)
    return LossBreakdown.build(fw.loss1, fw.loss2, w1, w2), grads


class Trainer:
    """Owns the model, optimizer state, and RNG streams for one run."""

    SNAPSHOT_EVERY = 100  # iterations between known-good parameter snapshots

    def __init__(self, config: TrainingConfig, system: Optional[NomaAutoencoder] = None):
        self.config = config
        if system is None:
            system = NomaAutoencoder.initialize(
                RngStream(config.seed, _STREAM_INIT),
                k1=config.k1, k2=config.k2, power=config.power,
                rx_gain_feature=config.rx_gain_feature,
                normalization=config.normalization,
            )
        self.system = system
        self.adam = AdamState.for_params(system.params(), lr=config.lr,
                                         beta1=config.beta1, beta2=config.beta2,
                                         epsilon=config.epsilon)
        self.rng_bits = RngStream(config.seed, _STREAM_BITS)
        self.rng_channel = RngStream(config.seed, _STREAM_CHANNEL)
        self.rng_noise = RngStream(config.seed, _STREAM_NOISE)
        self.iteration = 0
        self.snapshot = system.copy()
        self.snapshot_iteration = 0

    def step(self) -> LossBreakdown:
        if self.iteration - self.snapshot_iteration >= self.SNAPSHOT_EVERY:
            try:
                self.snapshot = self.system.copy()
                self.snapshot_iteration = self.iteration
            except ConfigError:
                pass  # keep the previous good snapshot
        batch = sample_batch(self.config, self.rng_bits, self.rng_channel, self.rng_noise)
        breakdown, grads = system_loss_and_grads(
            self.system, batch, weights=None, loss_weight=self.config.loss_weight)
        if not np.isfinite(breakdown.total):
            raise NumericError("non-finite loss")
        adam_step(self.system.params(), grads.flat(), self.adam)
        self.iteration += 1
        return breakdown

    def checkpoint(self, history: np.ndarray) -> Checkpoint:
        return Checkpoint(system=self.system.copy(), config=self.config,
                          iteration=self.iteration, history=history)

    def last_good_checkpoint(self, history: np.ndarray) -> Checkpoint:
        """Current state if its parameters are still finite, else the last snapshot."""
        try:
            return self.checkpoint(history)
        except ConfigError:
            return Checkpoint(system=self.snapshot, config=self.config,
                              iteration=self.snapshot_iteration, history=history)


def train_step(trainer: Trainer) -> LossBreakdown:
    """One optimization step; numeric failures carry the iteration index."""
    try:
        return trainer.step()
    except NumericError as exc:
        raise TrainingError(str(exc), iteration=trainer.iteration,
                            checkpoint=trainer.last_good_checkpoint(np.empty((0, 6)))) from exc


def train(config: TrainingConfig,
          checkpoint_every: int = 0,
          checkpoint_hook: Optional[Callable[[Checkpoint], None]] = None,
          log: Optional[Callable[[int, LossBreakdown], None]] = None,
          log_every: int = 1000) -> Checkpoint:
    """Run the configured number of steps and return the final checkpoint.

    On a numeric failure the raised TrainingError carries the last good
    parameters (Adam validates gradients before mutating anything).
    """
    trainer = Trainer(config)
    rows: List[Tuple[float, ...]] = []
    for i in range(config.iterations):
        try:
            breakdown = trainer.step()
        except NumericError as exc:
            history = np.array(rows, dtype=float).reshape(-1, 6)
            raise TrainingError(str(exc), iteration=i,
                                checkpoint=trainer.last_good_checkpoint(history)) from exc
        if i % config.history_every == 0:
            rows.append((i, breakdown.loss1, breakdown.loss2,
                         breakdown.w1, breakdown.w2, breakdown.total))
        if log is not None and (i % log_every == 0 or i == config.iterations - 1):
            log(i, breakdown)
        if checkpoint_every and checkpoint_hook and (i + 1) % checkpoint_every == 0:
            history = np.array(rows, dtype=float).reshape(-1, 6)
            checkpoint_hook(trainer.checkpoint(history))
    history = np.array(rows, dtype=float).reshape(-1, 6)
    return trainer.checkpoint(history)
