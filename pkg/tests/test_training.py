"""Loss functions, adaptive weighting, gradient routing, and the train loop."""
import math

import numpy as np
import pytest

from superconst.channel import ChannelDistribution
from superconst.errors import ConfigError, NumericError, TrainingError
from superconst.model import NomaAutoencoder
from superconst.nn import MlpSpec
from superconst.rng import RngStream
from superconst.training import (LossBreakdown, Trainer, TrainingConfig,
                                 adaptive_weights, bce, bce_batch,
                                 preset_config, sample_batch,
                                 system_loss_and_grads, train, train_step)


def test_bce_examples():
    eps = 1e-9
    assert bce([1, 0], [1 - eps, eps]) == pytest.approx(0.0, abs=1e-8)
    assert bce([1, 0], [0.5, 0.5]) == pytest.approx(2 * math.log(2), rel=1e-12)
    assert bce([1], [0.25]) == pytest.approx(math.log(4), rel=1e-12)


def test_bce_clamps_saturated_probabilities():
    v = bce([1, 0], [0.0, 1.0])
    assert np.isfinite(v)
    assert v == pytest.approx(-2 * math.log(1e-12), rel=1e-6)


def test_bce_non_negative_random():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n = int(rng.integers(1, 6))
        t = rng.integers(0, 2, n)
        p = rng.random(n)
        assert bce(t, p) >= 0.0


def test_bce_batch_is_mean_of_row_sums():
    t = np.array([[1, 0], [0, 1], [1, 1]])
    p = np.array([[0.9, 0.2], [0.3, 0.6], [0.5, 0.5]])
    rows = [bce(t[i], p[i]) for i in range(3)]
    assert bce_batch(t, p) == pytest.approx(np.mean(rows), rel=1e-15)


def test_bce_shape_mismatch():
    with pytest.raises(ConfigError):
        bce([1, 0], [0.5])


def test_adaptive_weights():
    assert adaptive_weights(0.3, 0.1, 10.0) == (10.0, 1.0)
    assert adaptive_weights(0.1, 0.3, 10.0) == (1.0, 10.0)
    assert adaptive_weights(0.2, 0.2, 10.0) == (10.0, 1.0)  # tie -> first branch
    with pytest.raises(ConfigError):
        adaptive_weights(0.1, 0.1, 0.5)
    with pytest.raises(NumericError):
        adaptive_weights(float("nan"), 0.1, 10.0)


def test_loss_breakdown_total_exact():
    b = LossBreakdown.build(0.31, 0.12, 10.0, 1.0)
    assert b.total == 10.0 * 0.31 + 1.0 * 0.12


def _small_config(**overrides):
    fields = dict(
        iterations=10, channel=ChannelDistribution.fixed(1.0, 2.0),
        loss_weight=10.0, batch_size=64, snr1_train_db=10.0, seed=3,
    )
    fields.update(overrides)
    return TrainingConfig(**fields)


def test_config_validation():
    with pytest.raises(ConfigError):
        _small_config(batch_size=1)
    with pytest.raises(ConfigError):
        _small_config(loss_weight=0.5)
    with pytest.raises(ConfigError):
        _small_config(iterations=0)


def test_presets_match_published_operating_points():
    c1 = preset_config("case1")
    assert c1.channel.kind == "fixed" and c1.channel.h2_fixed == 2.0
    assert c1.loss_weight == 10.0 and c1.snr1_train_db == 10.0
    c2 = preset_config("case2")
    assert (c2.channel.h2_min, c2.channel.h2_max) == (1.0, 3.0)
    assert c2.loss_weight == 20.0 and c2.iterations == 150_000
    c3 = preset_config("case3")
    assert (c3.channel.h2_min, c3.channel.h2_max) == (8.0, 12.0)
    assert c3.loss_weight == 15.0 and c3.iterations == 150_000
    with pytest.raises(ConfigError):
        preset_config("case4")


def test_zero_lr_is_a_noop_optimizer():
    config = _small_config(lr=0.0)
    trainer = Trainer(config)
    before = [p.copy() for p in trainer.system.params()]
    breakdown = train_step(trainer)
    assert np.isfinite(breakdown.total)
    for p, q in zip(trainer.system.params(), before):
        assert np.array_equal(p, q)


def test_identical_seeds_identical_losses():
    a = Trainer(_small_config(seed=11))
    b = Trainer(_small_config(seed=11))
    for _ in range(5):
        assert train_step(a) == train_step(b)


def test_gradient_routing_between_users():
    config = _small_config()
    trainer = Trainer(config)
    batch = sample_batch(config, trainer.rng_bits, trainer.rng_channel, trainer.rng_noise)

    _, g_user1 = system_loss_and_grads(trainer.system, batch, weights=(1.0, 0.0))
    _, g_user2 = system_loss_and_grads(trainer.system, batch, weights=(0.0, 1.0))
    # loss 1 never reaches rx2 and vice versa
    assert all(np.all(g == 0.0) for g in g_user1.rx2)
    assert all(np.all(g == 0.0) for g in g_user2.rx1)
    assert any(np.any(g != 0.0) for g in g_user1.rx1)
    assert any(np.any(g != 0.0) for g in g_user1.tx_symbol)
    assert any(np.any(g != 0.0) for g in g_user2.tx_symbol)

    # weighted total gradient is the weighted sum of the per-user gradients
    _, g_both = system_loss_and_grads(trainer.system, batch, weights=(10.0, 1.0))
    for gb, g1, g2 in zip(g_both.flat(), g_user1.flat(), g_user2.flat()):
        assert np.allclose(gb, 10.0 * g1 + 1.0 * g2, rtol=1e-12, atol=1e-14)


def test_symmetric_loss_under_role_swap():
    """With w=1, relabeling the users (bits, gains, decoders) keeps the total."""
    config = _small_config(seed=21)
    trainer = Trainer(config)
    system = trainer.system
    batch = sample_batch(config, trainer.rng_bits, trainer.rng_channel, trainer.rng_noise)
    # make the channel symmetric so the swap is exact
    batch.h2 = np.full_like(batch.h2, batch.h1)
    breakdown, _ = system_loss_and_grads(system, batch, weights=(1.0, 1.0))

    # mirror system: swap the encoder's input blocks and the two decoders
    mirrored = system.copy()
    k1 = system.k1
    for net in (mirrored.tx.symbol_net, mirrored.tx.gain_net):
        w = net.layers[0].weights
        w[:, :] = np.concatenate([w[:, k1:], w[:, :k1]], axis=1)
    mirrored.rx1.net, mirrored.rx2.net = mirrored.rx2.net, mirrored.rx1.net

    swapped = type(batch)(
        bits1=batch.bits2, bits2=batch.bits1, h1=batch.h1, h2=batch.h2,
        sigma2=batch.sigma2, noise1=batch.noise2, noise2=batch.noise1,
    )
    mirrored_breakdown, _ = system_loss_and_grads(mirrored, swapped, weights=(1.0, 1.0))
    assert mirrored_breakdown.total == pytest.approx(breakdown.total, rel=1e-12)
    assert mirrored_breakdown.loss1 == pytest.approx(breakdown.loss2, rel=1e-12)


def test_h2_redrawn_per_batch_element():
    config = _small_config(channel=ChannelDistribution.uniform(1.0, 1.0, 3.0))
    trainer = Trainer(config)
    batch = sample_batch(config, trainer.rng_bits, trainer.rng_channel, trainer.rng_noise)
    assert len(np.unique(batch.h2)) > 1


def test_training_reduces_loss_case1():
    config = preset_config("case1", iterations=1000, seed=2, batch_size=256)
    ckpt = train(config)
    early = ckpt.history[:100, 5].mean()
    late = ckpt.history[900:1000, 5].mean()
    assert late < early


def test_train_history_and_checkpoint_shape():
    config = _small_config(iterations=25, history_every=5)
    ckpt = train(config)
    assert ckpt.history.shape == (5, 6)
    assert ckpt.iteration == 25
    assert np.array_equal(ckpt.history[:, 0], [0, 5, 10, 15, 20])
    # totals recorded exactly as w1*l1 + w2*l2
    h = ckpt.history
    assert np.array_equal(h[:, 5], h[:, 3] * h[:, 1] + h[:, 4] * h[:, 2])


def test_intermediate_checkpoint_hook():
    seen = []
    config = _small_config(iterations=9)
    train(config, checkpoint_every=4, checkpoint_hook=lambda c: seen.append(c.iteration))
    assert seen == [4, 8]


def test_non_finite_loss_aborts_with_iteration_and_checkpoint():
    config = _small_config(iterations=50)
    trainer = Trainer(config)
    trainer.system.tx.symbol_net.layers[0].weights[0, 0] = np.nan
    with pytest.raises(TrainingError) as err:
        train_step(trainer)
    assert err.value.iteration == 0
    assert err.value.checkpoint is not None


def test_decoder_in_training_has_sigmoid_output():
    trainer = Trainer(_small_config())
    spec: MlpSpec = trainer.system.rx1.net.spec
    assert spec.activations[-1] == "sigmoid"
