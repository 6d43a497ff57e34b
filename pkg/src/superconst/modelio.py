"""JSON persistence for trained systems and declarative run configs.

Weights are stored as decimal arrays (json round-trips Python floats
exactly), so save -> load -> evaluate reproduces evaluation output
bit-for-bit. Unknown config keys are rejected, never ignored.
"""
from __future__ import annotations

import json
from dataclasses import fields as dataclass_fields
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .channel import ChannelDistribution
from .errors import ConfigError
from .model import Mlp, NomaAutoencoder, RxDecoder, TxEncoder
from .nn import DenseLayer, MlpSpec
from .training import PRESETS, Checkpoint, TrainingConfig, preset_config

SCHEMA_VERSION = 1


def channel_to_dict(dist: ChannelDistribution) -> dict:
    out = {"kind": dist.kind, "h1": float(np.real(dist.h1))}
    if dist.kind == "fixed":
        out["h2"] = float(dist.h2_fixed)
    else:
        out["h2_min"] = float(dist.h2_min)
        out["h2_max"] = float(dist.h2_max)
    return out


def channel_from_dict(d: dict) -> ChannelDistribution:
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError("channel must be an object with a 'kind' field")
    kind = d["kind"]
    if kind == "fixed":
        allowed = {"kind", "h1", "h2"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown channel keys: {sorted(unknown)}")
        return ChannelDistribution.fixed(d.get("h1", 1.0), d["h2"])
    if kind == "uniform":
        allowed = {"kind", "h1", "h2_min", "h2_max"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown channel keys: {sorted(unknown)}")
        return ChannelDistribution.uniform(d.get("h1", 1.0), d["h2_min"], d["h2_max"])
    raise ConfigError(f"unknown channel kind {kind!r}")


def config_to_dict(config: TrainingConfig, preset: Optional[str] = None) -> dict:
    out = {"preset": preset}
    for f in dataclass_fields(TrainingConfig):
        value = getattr(config, f.name)
        out[f.name] = channel_to_dict(value) if f.name == "channel" else value
    return out


def config_from_dict(d: dict) -> Tuple[TrainingConfig, Optional[str]]:
    """Expand a declarative config (optionally preset-based) into a
    TrainingConfig; unknown keys are an error."""
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in dataclass_fields(TrainingConfig)} | {"preset"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    d = dict(d)
    preset = d.pop("preset", None)
    if "channel" in d and d["channel"] is not None:
        d["channel"] = channel_from_dict(d["channel"])
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        return preset_config(preset, **d), preset
    if "channel" not in d:
        raise ConfigError("config needs either a preset or an explicit channel")
    if "iterations" not in d:
        raise ConfigError("config needs iterations")
    return TrainingConfig(**d), None


def _mlp_to_dict(mlp: Mlp) -> dict:
    return {
        "layer_dims": list(mlp.spec.layer_dims),
        "activations": list(mlp.spec.activations),
        "residual_flags": list(mlp.spec.residual_flags),
        "weights": [layer.weights.tolist() for layer in mlp.layers],
        "biases": [layer.bias.tolist() for layer in mlp.layers],
    }


def _mlp_from_dict(d: dict) -> Mlp:
    spec = MlpSpec(tuple(d["layer_dims"]), tuple(d["activations"]), tuple(d["residual_flags"]))
    layers = [
        DenseLayer(np.array(w, dtype=float), np.array(b, dtype=float), act)
        for w, b, act in zip(d["weights"], d["biases"], d["activations"])
    ]
    return Mlp(spec, layers)


def model_to_dict(checkpoint: Checkpoint, preset: Optional[str] = None) -> dict:
    system = checkpoint.system
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "noma-autoencoder",
        "k1": system.k1,
        "k2": system.k2,
        "power": system.tx.power,
        "rx_gain_feature": system.rx1.uses_gain_feature,
        "networks": {
            "tx_symbol": _mlp_to_dict(system.tx.symbol_net),
            "tx_gain": _mlp_to_dict(system.tx.gain_net),
            "rx1": _mlp_to_dict(system.rx1.net),
            "rx2": _mlp_to_dict(system.rx2.net),
        },
        "training": config_to_dict(checkpoint.config, preset),
        "iteration": checkpoint.iteration,
        "seed": checkpoint.config.seed,
    }


def save_model(path, checkpoint: Checkpoint, preset: Optional[str] = None) -> None:
    payload = model_to_dict(checkpoint, preset)
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def load_model(path) -> Tuple[NomaAutoencoder, dict]:
    """Rebuild a system from a model file; returns (system, metadata)."""
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model file {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("kind") != "noma-autoencoder":
        raise ConfigError(f"{path} is not a model file")
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported model schema {payload.get('schema_version')!r}; "
            f"this build reads version {SCHEMA_VERSION}"
        )
    nets = payload["networks"]
    gain_feature = bool(payload.get("rx_gain_feature", False))
    tx = TxEncoder(
        k1=int(payload["k1"]), k2=int(payload["k2"]),
        symbol_net=_mlp_from_dict(nets["tx_symbol"]),
        gain_net=_mlp_from_dict(nets["tx_gain"]),
        power=float(payload["power"]),
        normalization="codebook",
    )
    system = NomaAutoencoder(
        tx=tx,
        rx1=RxDecoder(1, _mlp_from_dict(nets["rx1"]), gain_feature),
        rx2=RxDecoder(2, _mlp_from_dict(nets["rx2"]), gain_feature),
    )
    meta = {k: payload[k] for k in ("training", "iteration", "seed", "schema_version")}
    return system, meta


def history_csv(history: np.ndarray, provenance: Optional[dict] = None) -> str:
    lines = []
    if provenance is not None:
        lines.append("# provenance: " + json.dumps(provenance, sort_keys=True))
    lines.append("iteration,loss1,loss2,w1,w2,total")
    for row in history:
        lines.append(",".join([str(int(row[0]))] + [repr(float(v)) for v in row[1:]]))
    return "\n".join(lines) + "\n"
