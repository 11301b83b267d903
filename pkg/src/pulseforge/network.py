"""Feed-forward controller mapping SU(n) features to pulse-sequence parameters."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .quantum import PulseSequence

FORMAT_VERSION = 1
TAU_MIN = 0.01
DEFAULT_HIDDEN = (100, 300)


class CheckpointError(ValueError):
    """Checkpoint file is malformed, truncated, or incompatible."""


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(x):
    return (x > 0).astype(x.dtype)


def _elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _elu_grad(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _silu(x):
    return x * _sigmoid(x)


def _silu_grad(x):
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "elu": (_elu, _elu_grad),
    "silu": (_silu, _silu_grad),
}


@dataclass
class MlpModel:
    layer_sizes: list[int]
    weights: list[np.ndarray] = field(repr=False)
    biases: list[np.ndarray] = field(repr=False)
    activation: str = "relu"
    n: int | None = None
    n_comp: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; choose from {sorted(ACTIVATIONS)}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("number of weight/bias arrays does not match layer_sizes")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[i + 1], self.layer_sizes[i])
            if w.shape != expected or b.shape != (expected[0],):
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape}, expected {expected}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")
        if (self.layer_sizes[-1] - 1) % 4:
            raise ValueError(f"output width {self.layer_sizes[-1]} is not of the form 4N+1")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def num_pulses(self) -> int:
        return (self.layer_sizes[-1] - 1) // 4

    def parameters(self) -> list[np.ndarray]:
        """Weights and biases interleaved per layer (W0, b0, W1, b1, ...)."""
        return [p for wb in zip(self.weights, self.biases) for p in wb]

    def copy(self) -> "MlpModel":
        return MlpModel(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
            self.n,
            self.n_comp,
            self.seed,
        )


def init_model(
    d: int,
    num_pulses: int,
    seed: int,
    hidden_sizes=DEFAULT_HIDDEN,
    activation: str = "relu",
    n: int | None = None,
    n_comp: int | None = None,
) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    if d < 3:
        raise ValueError(f"input dimension must be >= 3, got {d}")
    if num_pulses < 1:
        raise ValueError(f"num_pulses must be >= 1, got {num_pulses}")
    sizes = [d, *hidden_sizes, 4 * num_pulses + 1]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, weights, biases, activation, n, n_comp, seed)


@dataclass
class ActivationTrace:
    pre: list[np.ndarray]
    post: list[np.ndarray]


def forward(model: MlpModel, features: np.ndarray):
    """Raw outputs and per-layer trace. ``features`` may be (d,) or (batch, d).

    Hidden layers are affine then activation; the output layer is affine only.
    """
    x = np.asarray(features, dtype=float)
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"feature length {x.shape[-1]} does not match model input {model.input_dim}")
    act, _ = ACTIVATIONS[model.activation]
    pre, post = [], []
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = x @ w.T + b
        x = z if i == last else act(z)
        pre.append(z)
        post.append(x)
    return x, ActivationTrace(pre, post)


def backward(model: MlpModel, features: np.ndarray, trace: ActivationTrace, grad_out: np.ndarray):
    """Gradients of a scalar w.r.t. (weights, biases) given its gradient w.r.t. the raw output.

    ``features`` and ``grad_out`` carry a batch axis; contributions are summed over it.
    """
    _, act_grad = ACTIVATIONS[model.activation]
    inputs = [np.atleast_2d(features)] + trace.post[:-1]
    delta = np.atleast_2d(grad_out)
    gw = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for i in reversed(range(len(model.weights))):
        if i != len(model.weights) - 1:
            delta = delta * act_grad(trace.pre[i])
        gw[i] = delta.T @ inputs[i]
        gb[i] = delta.sum(axis=0)
        if i:
            delta = delta @ model.weights[i]
    return gw, gb


def softplus(x):
    return np.logaddexp(0.0, x)


def decode_raw(raw: np.ndarray, num_pulses: int):
    """Array form of ``decode_outputs``: (..., 4N+1) -> params (..., N, 4), T (...)."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape[-1] != 4 * num_pulses + 1:
        raise ValueError(f"raw output length {raw.shape[-1]} != 4*{num_pulses}+1")
    params = raw[..., : 4 * num_pulses].reshape(*raw.shape[:-1], num_pulses, 4)
    total_time = TAU_MIN + softplus(raw[..., 4 * num_pulses])
    return params, total_time


def decode_outputs(raw: np.ndarray, num_pulses: int) -> PulseSequence:
    params, total_time = decode_raw(raw, num_pulses)
    return PulseSequence(params, float(total_time))


def predict_sequence(model: MlpModel, features: np.ndarray) -> PulseSequence:
    raw, _ = forward(model, features)
    return decode_outputs(raw, model.num_pulses)


def save_checkpoint(model: MlpModel, path) -> None:
    """Write a JSON checkpoint; floats use shortest round-trip repr, so reloads are bit-exact."""
    doc = {
        "format_version": FORMAT_VERSION,
        "n": model.n,
        "n_comp": model.n_comp,
        "num_pulses": model.num_pulses,
        "layer_sizes": list(model.layer_sizes),
        "activation": model.activation,
        "seed": model.seed,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path, n: int | None = None, num_pulses: int | None = None) -> MlpModel:
    """Read a checkpoint, optionally checking it matches the requested qudit size / pulse count."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise CheckpointError(f"{path}: checkpoint must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format_version {version!r}")
    try:
        model = MlpModel(
            layer_sizes=[int(s) for s in doc["layer_sizes"]],
            weights=[np.array(w, dtype=float) for w in doc["weights"]],
            biases=[np.array(b, dtype=float) for b in doc["biases"]],
            activation=doc["activation"],
            n=doc.get("n"),
            n_comp=doc.get("n_comp"),
            seed=doc.get("seed"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: invalid checkpoint contents: {exc}") from exc
    if doc.get("num_pulses") != model.num_pulses:
        raise CheckpointError(f"{path}: num_pulses {doc.get('num_pulses')} disagrees with layer sizes")
    if n is not None and model.input_dim != n * n - 1:
        raise CheckpointError(
            f"{path}: shape mismatch, model input {model.input_dim} but n={n} needs {n * n - 1} features"
        )
    if num_pulses is not None and model.num_pulses != num_pulses:
        raise CheckpointError(f"{path}: shape mismatch, model has {model.num_pulses} pulses, wanted {num_pulses}")
    return model
