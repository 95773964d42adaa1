"""Deep Positron inference: a feed-forward MLP where each neuron is one EMAC.

Two engines compute the same thing:

* :func:`network_forward` calls the EMAC unit once per neuron on
  :class:`~deep_positron.codec.Code` objects.  It is the reference.
* :class:`CompiledNetwork` evaluates whole batches with exact integer
  matrix products and a table-driven final rounding.  It exists because the
  format sweeps push millions of products through the network; the test
  suite pins it to the reference bit for bit.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import codec
from .codec import Code, FormatSpec, Kind
from .emac import MacConfig, MacTrace, emac
from .errors import ConfigError, DimensionMismatch, FormatMismatch, NaRInput


class Activation(enum.Enum):
    RELU = "relu"
    AFFINE = "affine"


@dataclass(frozen=True)
class LayerModel:
    weights: tuple[tuple[Code, ...], ...]  # out_dim x in_dim
    biases: tuple[Code, ...]
    activation: Activation = Activation.RELU

    @property
    def out_dim(self) -> int:
        return len(self.biases)

    @property
    def in_dim(self) -> int:
        return len(self.weights[0]) if self.weights else 0


@dataclass(frozen=True)
class NetworkModel:
    spec: FormatSpec
    input_dim: int
    layers: tuple[LayerModel, ...]

    def __post_init__(self) -> None:
        dim = self.input_dim
        for i, layer in enumerate(self.layers):
            if len(layer.weights) != layer.out_dim:
                raise DimensionMismatch(f"layer {i}: {len(layer.weights)} weight rows, {layer.out_dim} biases")
            if any(len(row) != dim for row in layer.weights):
                raise DimensionMismatch(f"layer {i} expects inputs of width {dim}")
            if layer.activation is Activation.AFFINE and i != len(self.layers) - 1:
                raise ConfigError(f"layer {i}: only the readout layer may be affine")
            for c in (*layer.biases, *(c for row in layer.weights for c in row)):
                if c.spec != self.spec:
                    raise FormatMismatch(f"layer {i} holds a {c.spec.tag} code in a {self.spec.tag} model")
            dim = layer.out_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim if self.layers else self.input_dim


def relu(c: Code) -> Code:
    return codec.zero(c.spec) if codec.is_negative(c) else c


def layer_forward(layer: LayerModel, inputs: Sequence[Code],
                  traces: Optional[list[MacTrace]] = None) -> list[Code]:
    """One EMAC per output neuron, followed by the layer activation."""
    if len(inputs) != layer.in_dim:
        raise DimensionMismatch(f"layer takes {layer.in_dim} inputs, got {len(inputs)}")
    out = []
    for row, bias in zip(layer.weights, layer.biases):
        spec = bias.spec
        for c in inputs:
            if c.spec != spec:
                raise FormatMismatch(f"input {c!r} is not {spec.tag}")
        trace = MacTrace() if traces is not None else None
        y = emac(row, inputs, MacConfig(spec, max(layer.in_dim, 1), bias), trace)
        if traces is not None:
            traces.append(trace)
        out.append(relu(y) if layer.activation is Activation.RELU else y)
    return out


def network_forward(model: NetworkModel, inputs: Sequence[Code]) -> list[Code]:
    if len(inputs) != model.input_dim:
        raise DimensionMismatch(f"model takes {model.input_dim} inputs, got {len(inputs)}")
    h = list(inputs)
    for layer in model.layers:
        h = layer_forward(layer, h)
    return h


def quantize_input(model: NetworkModel, features: Sequence[float]) -> list[Code]:
    return [codec.round_to_format(Fraction(float(v)), model.spec) for v in features]


def argmax_codes(codes: Sequence[Code]) -> int:
    """Index of the largest value; the lowest index wins ties."""
    best, best_v = 0, None
    for i, c in enumerate(codes):
        v = codec.exact_value(c)
        if best_v is None or v > best_v:
            best, best_v = i, v
    return best


def classify(model: NetworkModel, inputs: Sequence[Code]) -> int:
    return argmax_codes(network_forward(model, inputs))


# ---------------------------------------------------------------------------
# batched engine


class Lattice:
    """Integer view of a format: every code value is ``ints[bits] * 2^-scale``."""

    def __init__(self, spec: FormatSpec):
        self.spec = spec
        if spec.kind is Kind.POSIT:
            self.scale = (spec.n - 2) << spec.es
        elif spec.kind is Kind.FLOAT:
            self.scale = spec.float_bias - 1 + spec.wf
        else:
            self.scale = spec.q
        table = codec.value_table(spec)
        self.valid = np.array([v is not None for v in table])
        ints = [int(v * (1 << self.scale)) if v is not None else 0 for v in table]
        self.int_bits = max(abs(i) for i in ints).bit_length()
        pairs = sorted(
            (int(v * (1 << self.scale)), bits)
            for bits, v in enumerate(table)
            if v is not None and not (spec.kind is Kind.FLOAT and bits == 1 << (spec.n - 1))
        )
        vals = [p[0] for p in pairs]
        lift = 1 << self.scale
        self.codes = np.array([p[1] for p in pairs], dtype=np.int64)
        self._tables = {}
        for dt in (object, np.int64):
            if dt is np.int64 and not self.fits_int64(1):
                continue
            # sorted values and doubled midpoints, in units of 2^-2*scale
            self._tables[dt] = (
                np.array(ints, dtype=dt),
                np.array([v * lift for v in vals], dtype=dt),
                np.array([(a + b) * lift for a, b in zip(vals, vals[1:])], dtype=dt),
            )

    def fits_int64(self, fan_in: int) -> bool:
        """Whether a fan_in-term sum (plus bias) stays inside int64."""
        return 2 * self.int_bits + max(fan_in, 1).bit_length() + 3 <= 62

    def ints(self, bits: np.ndarray, dtype=object) -> np.ndarray:
        return self._tables[dtype][0][bits]

    def round(self, acc: np.ndarray) -> np.ndarray:
        """Round exact sums (units 2^-2*scale) to code bits."""
        spec = self.spec
        flat = np.asarray(acc).reshape(-1)
        _, values2, mids2 = self._tables[object if flat.dtype == object else np.int64]
        if spec.kind is Kind.FIXED:
            idx = np.searchsorted(values2, flat, side="right") - 1
            idx = np.maximum(idx, 0)
            return self.codes[idx].reshape(np.shape(acc))
        doubled = flat * 2
        idx = np.searchsorted(mids2, doubled, side="left")
        tie_pos = np.minimum(idx, len(mids2) - 1)
        tie = (idx < len(mids2)) & (mids2[tie_pos] == doubled)
        out = self.codes[idx]
        if tie.any():
            lo = self.codes[idx[tie]]
            hi = self.codes[idx[tie] + 1]
            out[tie] = np.where(lo % 2 == 0, lo, hi)
        if spec.kind is Kind.POSIT:
            nonzero = flat != 0
            pos_under = (out == 0) & nonzero & (flat > 0)
            neg_under = (out == 0) & nonzero & (flat < 0)
            out[pos_under] = 1
            out[neg_under] = (1 << spec.n) - 1
        return out.reshape(np.shape(acc))


@lru_cache(maxsize=None)
def lattice(spec: FormatSpec) -> Lattice:
    return Lattice(spec)


class CompiledNetwork:
    """Batch evaluator, bit-identical to :func:`network_forward`."""

    def __init__(self, model: NetworkModel):
        self.model = model
        self.lat = lattice(model.spec)
        widest = max([model.input_dim] + [layer.in_dim for layer in model.layers])
        self.dtype = np.int64 if self.lat.fits_int64(widest) else object
        self._layers = []
        for layer in model.layers:
            w = np.array([[c.bits for c in row] for row in layer.weights], dtype=np.int64)
            b = np.array([c.bits for c in layer.biases], dtype=np.int64)
            for bits in (w, b):
                if bits.size and not self.lat.valid[bits].all():
                    raise NaRInput("model parameters contain NaR or reserved codes")
            w_int = self.lat.ints(w, self.dtype).reshape(w.shape)
            b_int = (self.lat.ints(b, self.dtype) * (1 << self.lat.scale)).reshape(b.shape)
            self._layers.append((w_int, b_int, layer.activation))

    def forward_bits(self, bits: np.ndarray) -> np.ndarray:
        """Input code bits (rows x input_dim) to output code bits."""
        bits = np.asarray(bits, dtype=np.int64)
        if bits.ndim != 2 or bits.shape[1] != self.model.input_dim:
            raise DimensionMismatch(f"expected (rows, {self.model.input_dim}) input bits")
        if not self.lat.valid[bits].all():
            raise NaRInput("inputs contain NaR or reserved codes")
        neg_bit = 1 << (self.model.spec.n - 1)
        for w_int, b_int, act in self._layers:
            x = self.lat.ints(bits, self.dtype)
            acc = x @ w_int.T + b_int if w_int.size else np.broadcast_to(b_int, (len(bits), len(b_int)))
            bits = self.lat.round(acc)
            if act is Activation.RELU:
                bits = np.where(bits & neg_bit, 0, bits)
        return bits

    def quantize_features(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        uniq, inv = np.unique(features, return_inverse=True)
        spec = self.model.spec
        table = np.array([codec.round_to_format(Fraction(float(v)), spec).bits for v in uniq], dtype=np.int64)
        return table[inv].reshape(features.shape)

    def predict(self, features: np.ndarray) -> np.ndarray:
        out = self.forward_bits(self.quantize_features(features))
        vals = self.lat.ints(out, self.dtype)
        return np.array([int(np.argmax(row)) for row in vals], dtype=np.int64)


# ---------------------------------------------------------------------------
# model files


def exact_decimal(v: Fraction) -> str:
    """Exact decimal string for a dyadic rational, else ``p/q``."""
    v = Fraction(v)
    den = v.denominator
    t = den.bit_length() - 1
    if den != 1 << t:
        return f"{v.numerator}/{den}"
    if t == 0:
        return str(v.numerator)
    digits = str(abs(v.numerator) * 5 ** t).rjust(t + 1, "0")
    text = f"{digits[:-t]}.{digits[-t:]}".rstrip("0").rstrip(".")
    return ("-" if v < 0 else "") + text


def model_to_dict(model: NetworkModel) -> dict:
    return {
        "format": model.spec.tag,
        "input_dim": model.input_dim,
        "layers": [
            {
                "out_dim": layer.out_dim,
                "activation": layer.activation.value,
                "weights": [exact_decimal(codec.exact_value(c)) for row in layer.weights for c in row],
                "biases": [exact_decimal(codec.exact_value(c)) for c in layer.biases],
            }
            for layer in model.layers
        ],
    }


def model_from_dict(doc: dict) -> NetworkModel:
    try:
        spec = FormatSpec.parse(doc["format"])
        dim = int(doc["input_dim"])
        input_dim = dim
        layers = []
        for i, entry in enumerate(doc["layers"]):
            out = int(entry["out_dim"])
            flat = [codec.round_to_format(Fraction(s), spec) for s in entry["weights"]]
            if len(flat) != out * dim:
                raise DimensionMismatch(f"layer {i}: {len(flat)} weights for a {out}x{dim} matrix")
            rows = tuple(tuple(flat[r * dim:(r + 1) * dim]) for r in range(out))
            biases = tuple(codec.round_to_format(Fraction(s), spec) for s in entry["biases"])
            layers.append(LayerModel(rows, biases, Activation(entry.get("activation", "relu"))))
            dim = out
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (DimensionMismatch, FormatMismatch)):
            raise
        raise ConfigError(f"malformed model document: {exc}") from exc
    return NetworkModel(spec, input_dim, tuple(layers))


def save_model(model: NetworkModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1))


def load_model(path: str | Path) -> NetworkModel:
    return model_from_dict(json.loads(Path(path).read_text()))
