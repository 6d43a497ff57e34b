"""Dense-network substrate: batched forward/backward passes for small MLPs
with ELU/sigmoid activations and identity skip connections, an Adam
optimizer, and a finite-difference gradient checker.

Everything runs in float64; the networks here are a few thousand parameters,
so exactness and auditability of the reverse-mode gradients beat speed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

from .errors import ConfigError, NumericError

ACTIVATIONS = ("elu", "sigmoid", "linear")


def elu(x):
    """x for x >= 0, exp(x) - 1 below; continuous at 0 with slope 1."""
    arr = np.asarray(x, dtype=float)
    # max(x, 0) + expm1(min(x, 0)) hits both branches without a select
    out = np.maximum(arr, 0.0) + np.expm1(np.minimum(arr, 0.0))
    return float(out) if out.ndim == 0 else out


def sigmoid(x):
    """Logistic function 1 / (1 + exp(-x)), overflow-safe on both tails."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(arr)
    pos = arr >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    expx = np.exp(arr[~pos])
    out[~pos] = expx / (1.0 + expx)
    return float(out[0]) if np.ndim(x) == 0 else out


def softplus(x):
    """log(1 + exp(x)) without overflow; the positivity map for learned gains."""
    arr = np.asarray(x, dtype=float)
    out = np.maximum(arr, 0.0) + np.log1p(np.exp(-np.abs(arr)))
    return float(out) if out.ndim == 0 else out


def _activate(tag: str, z: np.ndarray) -> np.ndarray:
    if tag == "elu":
        out = np.minimum(z, 0.0)
        np.expm1(out, out=out)
        out += np.maximum(z, 0.0)
        return out
    if tag == "sigmoid":
        return sigmoid(z)
    if tag == "linear":
        return z
    raise ConfigError(f"unknown activation {tag!r}")


def _activation_grad(tag: str, z: np.ndarray) -> np.ndarray:
    if tag == "elu":
        # exp(min(z, 0)) is 1 on the non-negative branch, exp(z) below
        out = np.minimum(z, 0.0)
        np.exp(out, out=out)
        return out
    if tag == "sigmoid":
        s = sigmoid(z)
        return s * (1.0 - s)
    if tag == "linear":
        return np.ones_like(z)
    raise ConfigError(f"unknown activation {tag!r}")


@dataclass(frozen=True)
class MlpSpec:
    """Shape of a dense stack: layer_dims = (in, out_1, ..., out_L)."""

    layer_dims: Tuple[int, ...]
    activations: Tuple[str, ...]
    residual_flags: Tuple[bool, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "activations", tuple(self.activations))
        object.__setattr__(self, "residual_flags", tuple(bool(f) for f in self.residual_flags))
        if len(dims) < 2 or any(d <= 0 for d in dims):
            raise ConfigError(f"layer_dims must be >= 2 positive entries, got {dims}")
        n = len(dims) - 1
        if len(self.activations) != n or len(self.residual_flags) != n:
            raise ConfigError("activations and residual_flags must have one entry per layer")
        for tag in self.activations:
            if tag not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {tag!r}")
        for i, flag in enumerate(self.residual_flags):
            if flag and dims[i] != dims[i + 1]:
                raise ConfigError(
                    f"residual flag on layer {i} requires in_dim == out_dim, got {dims[i]}->{dims[i + 1]}"
                )

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]


@dataclass
class DenseLayer:
    """One fully connected layer: activation(weights @ x + bias)."""

    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray     # (out_dim,)
    activation: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ConfigError("weights must be a matrix and bias a vector")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ConfigError(
                f"weights rows ({self.weights.shape[0]}) != bias length ({self.bias.shape[0]})"
            )
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ConfigError("layer parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class ForwardTape:
    """Per-layer inputs and pre-activations cached by one forward pass."""

    inputs: List[np.ndarray]
    preacts: List[np.ndarray]
    output: np.ndarray
    single: bool = False

    def __len__(self):
        return len(self.inputs)


class Mlp:
    """A dense stack with optional identity skips, built from an MlpSpec."""

    def __init__(self, spec: MlpSpec, layers: Sequence[DenseLayer]):
        layers = list(layers)
        if len(layers) != spec.n_layers:
            raise ConfigError("layer count does not match spec")
        for i, layer in enumerate(layers):
            if layer.in_dim != spec.layer_dims[i] or layer.out_dim != spec.layer_dims[i + 1]:
                raise ConfigError(f"layer {i} shape does not match spec")
            if layer.activation != spec.activations[i]:
                raise ConfigError(f"layer {i} activation does not match spec")
        self.spec = spec
        self.layers = layers

    @classmethod
    def initialize(cls, spec: MlpSpec, rng) -> "Mlp":
        """Glorot-uniform weights in +-sqrt(6/(in+out)), zero biases."""
        layers = []
        for i in range(spec.n_layers):
            fan_in, fan_out = spec.layer_dims[i], spec.layer_dims[i + 1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, (fan_out, fan_in))
            layers.append(DenseLayer(w, np.zeros(fan_out), spec.activations[i]))
        return cls(spec, layers)

    def forward(self, x) -> Tuple[np.ndarray, ForwardTape]:
        """Run the stack, caching what backward needs.

        Accepts a single vector or an (N, in_dim) batch; the output matches.
        """
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        a = arr[None, :] if single else arr
        if a.shape[1] != self.spec.in_dim:
            raise ConfigError(f"input dim {a.shape[1]} != spec in_dim {self.spec.in_dim}")
        inputs, preacts = [], []
        for layer, skip in zip(self.layers, self.spec.residual_flags):
            inputs.append(a)
            z = a @ layer.weights.T + layer.bias
            preacts.append(z)
            out = _activate(layer.activation, z)
            if skip:
                out = out + a
            a = out
        tape = ForwardTape(inputs, preacts, a, single)
        return (a[0] if single else a), tape

    def predict(self, x) -> np.ndarray:
        """Forward pass without a tape, for inference on large batches."""
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        a = arr[None, :] if single else arr
        for layer, skip in zip(self.layers, self.spec.residual_flags):
            z = a @ layer.weights.T + layer.bias
            out = _activate(layer.activation, z)
            a = out + a if skip else out
        return a[0] if single else a

    def backward(self, tape: ForwardTape, upstream) -> Tuple[List[Tuple[np.ndarray, np.ndarray]], np.ndarray]:
        """Exact reverse-mode gradients of forward.

        Returns ([(dW, db)] per layer, gradient w.r.t. the input); the input
        gradient accumulates both branches of every skip connection.
        """
        if len(tape) != self.spec.n_layers:
            raise NumericError("tape does not match network depth")
        g = np.asarray(upstream, dtype=float)
        if tape.single:
            g = g[None, :]
        if g.shape != tape.output.shape:
            raise NumericError("upstream gradient shape does not match forward output")
        param_grads: List[Tuple[np.ndarray, np.ndarray]] = []
        for i in reversed(range(self.spec.n_layers)):
            layer = self.layers[i]
            z = tape.preacts[i]
            x_in = tape.inputs[i]
            dz = g * _activation_grad(layer.activation, z)
            dw = dz.T @ x_in
            db = dz.sum(axis=0)
            gx = dz @ layer.weights
            if self.spec.residual_flags[i]:
                gx = gx + g
            param_grads.append((dw, db))
            g = gx
        param_grads.reverse()
        return param_grads, (g[0] if tape.single else g)

    def params(self) -> List[np.ndarray]:
        """Live parameter arrays, alternating weights and bias per layer."""
        out: List[np.ndarray] = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def copy(self) -> "Mlp":
        layers = [
            DenseLayer(layer.weights.copy(), layer.bias.copy(), layer.activation)
            for layer in self.layers
        ]
        return Mlp(self.spec, layers)


def flatten_layer_grads(param_grads: Sequence[Tuple[np.ndarray, np.ndarray]]) -> List[np.ndarray]:
    """Match Mlp.params() ordering: W0, b0, W1, b1, ..."""
    flat: List[np.ndarray] = []
    for dw, db in param_grads:
        flat.append(dw)
        flat.append(db)
    return flat


@dataclass
class AdamState:
    """Adam accumulators; shapes mirror the parameter list they track."""

    first_moment: List[np.ndarray]
    second_moment: List[np.ndarray]
    step: int
    lr: float
    beta1: float
    beta2: float
    epsilon: float

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("betas must lie in [0, 1)")
        # lr = 0 is allowed as an explicit no-op optimizer
        if self.lr < 0.0 or self.epsilon <= 0.0:
            raise ConfigError("lr must be >= 0 and epsilon > 0")
        if self.step < 0:
            raise ConfigError("step must be non-negative")

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        return cls(
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            step=0,
            lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon,
        )


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState):
    """One bias-corrected Adam update, applied to params in place.

    Validates every gradient before touching any parameter, so a non-finite
    gradient leaves the model untouched.
    """
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ConfigError("params, grads, and Adam state must have matching lengths")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ConfigError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.isfinite(g).all():
            raise NumericError("non-finite gradient")
    t = state.step + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    state.step = t
    return params, state


def grad_check(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
               loss_fn: Callable[[], float], eps: float,
               scale_floor: float = 1e-2) -> float:
    """Worst relative disagreement between grads and central finite differences.

    Each parameter entry is perturbed by +-eps in place and loss_fn re-evaluated.
    Discrepancies are measured relative to max(|backprop|, |fd|, scale_floor);
    with the default floor 1e-2 a 1e-4 threshold therefore tolerates 1e-6
    absolute error on near-zero gradients.
    """
    if eps <= 0.0:
        raise ConfigError("eps must be positive")
    worst = 0.0
    for p, g in zip(params, grads):
        flat_g = np.asarray(g).reshape(-1)
        for i in range(p.size):
            orig = p.flat[i]
            p.flat[i] = orig + eps
            f_plus = loss_fn()
            p.flat[i] = orig - eps
            f_minus = loss_fn()
            p.flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * eps)
            diff = abs(fd - flat_g[i])
            denom = max(abs(fd), abs(flat_g[i]), scale_floor)
            worst = max(worst, diff / denom)
    return worst
