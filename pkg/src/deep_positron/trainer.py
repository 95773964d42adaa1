"""Full-precision training of the reference MLP, and its quantization.

Models are trained in float64 with mini-batch gradient descent on a
softmax cross-entropy readout, then mapped parameter by parameter onto a
low-precision format for inference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import codec
from .codec import FormatSpec
from .data import Dataset, one_hot
from .errors import ConfigError, DimensionMismatch, NonFiniteLoss
from .network import Activation, LayerModel, NetworkModel

FLOAT_MODEL_FORMAT = "float64"


@dataclass
class FloatLayer:
    weights: np.ndarray  # (out_dim, in_dim)
    biases: np.ndarray  # (out_dim,)
    activation: Activation = Activation.RELU


@dataclass
class FloatModel:
    input_dim: int
    layers: list[FloatLayer]

    def __post_init__(self) -> None:
        dim = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.weights.shape[1] != dim or layer.biases.shape != (layer.weights.shape[0],):
                raise DimensionMismatch(f"layer {i} does not chain from width {dim}")
            if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.biases))):
                raise NonFiniteLoss(f"layer {i} has non-finite parameters")
            dim = layer.weights.shape[0]

    def copy(self) -> FloatModel:
        return FloatModel(self.input_dim, [
            FloatLayer(l.weights.copy(), l.biases.copy(), l.activation) for l in self.layers
        ])


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple[int, ...] = (16,)
    learning_rate: float = 0.05
    epochs: int = 200
    batch_size: int = 16
    momentum: float = 0.9
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training options {sorted(unknown)}")
        kw = dict(d)
        if "hidden" in kw:
            kw["hidden"] = tuple(int(h) for h in kw["hidden"])
        return cls(**kw)


def init_model(input_dim: int, num_classes: int, hidden: Sequence[int], rng: np.random.Generator) -> FloatModel:
    """Glorot-uniform weights, zero biases; ReLU hidden layers, affine readout."""
    dims = [input_dim, *hidden, num_classes]
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        r = np.sqrt(6.0 / (fan_in + fan_out))
        act = Activation.AFFINE if i == len(dims) - 2 else Activation.RELU
        layers.append(FloatLayer(rng.uniform(-r, r, size=(fan_out, fan_in)), np.zeros(fan_out), act))
    return FloatModel(input_dim, layers)


def forward(model: FloatModel, x: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Logits for a batch (rows are samples)."""
    h = np.asarray(x, dtype=dtype)
    for layer in model.layers:
        h = h @ layer.weights.astype(dtype).T + layer.biases.astype(dtype)
        if layer.activation is Activation.RELU:
            h = np.maximum(h, 0)
    return h


def predict(model: FloatModel, x: np.ndarray, dtype=np.float64) -> np.ndarray:
    return np.argmax(forward(model, x, dtype), axis=1)


def accuracy(model: FloatModel, x: np.ndarray, y: np.ndarray, dtype=np.float64) -> float:
    if len(y) == 0:
        return 0.0
    return float(np.mean(predict(model, x, dtype) == y))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(model: FloatModel, x: np.ndarray, y: np.ndarray) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Mean cross-entropy and per-layer (dW, db) by backpropagation."""
    acts = [np.asarray(x, dtype=np.float64)]
    pre = []
    for layer in model.layers:
        z = acts[-1] @ layer.weights.T + layer.biases
        pre.append(z)
        acts.append(np.maximum(z, 0) if layer.activation is Activation.RELU else z)
    probs = _softmax(acts[-1])
    m = len(y)
    loss = float(-np.mean(np.log(probs[np.arange(m), y] + 1e-300)))
    delta = (probs - one_hot(y, probs.shape[1])) / m
    grads = [None] * len(model.layers)
    for i in reversed(range(len(model.layers))):
        layer = model.layers[i]
        if layer.activation is Activation.RELU:
            delta = delta * (pre[i] > 0)
        grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
        delta = delta @ layer.weights
    return loss, grads


def train(ds: Dataset, cfg: TrainConfig) -> FloatModel:
    """Train on ``ds``'s train split; deterministic for a given config."""
    rng = np.random.default_rng(cfg.seed)
    model = init_model(ds.features.shape[1], ds.num_classes, cfg.hidden, rng)
    x, y = ds.train
    if len(y) == 0:
        return model
    velocity = [(np.zeros_like(l.weights), np.zeros_like(l.biases)) for l in model.layers]
    for _ in range(cfg.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(model, x[batch], y[batch])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss}; lower the learning rate")
            for layer, (gw, gb), (vw, vb) in zip(model.layers, grads, velocity):
                vw *= cfg.momentum
                vw -= cfg.learning_rate * gw
                vb *= cfg.momentum
                vb -= cfg.learning_rate * gb
                layer.weights += vw
                layer.biases += vb
                if not (np.isfinite(layer.weights).all() and np.isfinite(layer.biases).all()):
                    raise NonFiniteLoss("parameters became non-finite; lower the learning rate")
    return model


def gradient_check(model: FloatModel, x: np.ndarray, y: np.ndarray, step: float = 1e-5) -> float:
    """Max relative error between backprop and central differences."""
    _, grads = loss_and_grads(model, x, y)
    worst = 0.0
    probe = model.copy()
    for layer, (gw, gb) in zip(probe.layers, grads):
        for param, analytic in ((layer.weights, gw), (layer.biases, gb)):
            flat = param.reshape(-1)
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + step
                up, _ = loss_and_grads(probe, x, y)
                flat[i] = keep - step
                down, _ = loss_and_grads(probe, x, y)
                flat[i] = keep
                numeric = (up - down) / (2 * step)
                a = analytic.reshape(-1)[i]
                denom = max(abs(a), abs(numeric), 1e-6)
                worst = max(worst, abs(a - numeric) / denom)
    return worst


def quantize(model: FloatModel, spec: FormatSpec) -> NetworkModel:
    """Round every parameter to ``spec``."""
    layers = []
    for layer in model.layers:
        weights = tuple(
            tuple(codec.round_to_format(Fraction(float(w)), spec) for w in row) for row in layer.weights
        )
        biases = tuple(codec.round_to_format(Fraction(float(b)), spec) for b in layer.biases)
        layers.append(LayerModel(weights, biases, layer.activation))
    return NetworkModel(spec, model.input_dim, tuple(layers))


def save_float_model(model: FloatModel, path: str | Path) -> None:
    doc = {
        "format": FLOAT_MODEL_FORMAT,
        "input_dim": model.input_dim,
        "layers": [
            {
                "out_dim": int(l.weights.shape[0]),
                "activation": l.activation.value,
                "weights": [repr(float(w)) for w in l.weights.reshape(-1)],
                "biases": [repr(float(b)) for b in l.biases],
            }
            for l in model.layers
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_float_model(path: str | Path) -> FloatModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FLOAT_MODEL_FORMAT:
        raise ConfigError(f"{path} is not a {FLOAT_MODEL_FORMAT} model (format={doc.get('format')!r})")
    dim = int(doc["input_dim"])
    layers = []
    for entry in doc["layers"]:
        out = int(entry["out_dim"])
        w = np.array([float(s) for s in entry["weights"]]).reshape(out, dim)
        b = np.array([float(s) for s in entry["biases"]])
        layers.append(FloatLayer(w, b, Activation(entry["activation"])))
        dim = out
    return FloatModel(int(doc["input_dim"]), layers)
