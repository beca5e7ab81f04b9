"""Dense feed-forward model runtime.

Models are stacks of affine layers with elementwise activations. Classifiers
apply a softmax after the last layer; regressors emit the last layer's output
unchanged. Everything runs in float64 numpy and supports batched inputs of
shape ``(n, d)`` as well as single vectors of shape ``(d,)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._io import atomic_write_text

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid")
TASKS = ("classification", "regression")

# head(outputs) -> (values, d values / d outputs), both batched
Head = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


class ModelError(ValueError):
    """Raised for malformed models, bad inputs or numerical breakdown."""


@dataclass(frozen=True)
class ModelSignature:
    input_dim: int
    output_dim: int
    task: str
    output_min: float | None = None
    output_max: float | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ModelError(f"unknown task {self.task!r}")
        if self.input_dim < 1:
            raise ModelError("input_dim must be >= 1")
        if self.task == "classification" and self.output_dim < 2:
            raise ModelError("a classifier needs at least 2 classes")
        if self.output_dim < 1:
            raise ModelError("output_dim must be >= 1")
        lo, hi = self.output_min, self.output_max
        if (lo is None) != (hi is None):
            raise ModelError("output_min and output_max must be given together")
        if lo is not None and not lo < hi:
            raise ModelError(f"output_min ({lo}) must be < output_max ({hi})")

    @property
    def output_bounds(self) -> tuple[float, float]:
        if self.output_min is None:
            return (-math.inf, math.inf)
        return (self.output_min, self.output_max)


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 2:
            raise ModelError("layer weights must be a 2-D matrix")
        if b.shape != (w.shape[0],):
            raise ModelError(f"bias length {b.shape[0]} does not match {w.shape[0]} output neurons")
        if self.activation not in ACTIVATIONS:
            raise ModelError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ModelError("non-finite weight or bias")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    # numerically stable logistic
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "identity":
        return np.ones_like(z)
    if name == "relu":
        # subgradient 0 at exactly 0
        return (z > 0).astype(np.float64)
    if name == "tanh":
        return 1.0 - a * a
    return a * (1.0 - a)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class Model:
    signature: ModelSignature
    layers: tuple[Layer, ...] = field(default_factory=tuple)

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ModelError("model has no layers")
        prev = self.signature.input_dim
        for i, layer in enumerate(layers):
            if layer.in_dim != prev:
                raise ModelError(f"layer {i}: expects input dim {layer.in_dim}, previous stage gives {prev}")
            prev = layer.out_dim
        if prev != self.signature.output_dim:
            raise ModelError(f"layer {len(layers) - 1}: output dim {prev} != declared output_dim {self.signature.output_dim}")

    @property
    def task(self) -> str:
        return self.signature.task

    @property
    def input_dim(self) -> int:
        return self.signature.input_dim

    @property
    def output_dim(self) -> int:
        return self.signature.output_dim

    def _check_input(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ModelError(f"input has shape {x.shape[-1:]}, model expects dimension {self.input_dim}")
        if not np.all(np.isfinite(x)):
            raise ModelError("non-finite input")
        return x, single

    def _trace(self, x: np.ndarray):
        pre, post = [], [x]
        a = x
        for i, layer in enumerate(self.layers):
            with np.errstate(over="ignore", invalid="ignore"):
                z = a @ layer.weights.T + layer.bias
                a = _activate(layer.activation, z)
            if not np.all(np.isfinite(a)):
                raise ModelError(f"non-finite activation at layer {i}")
            pre.append(z)
            post.append(a)
        return pre, post

    def logits(self, x) -> np.ndarray:
        x, single = self._check_input(x)
        out = self._trace(x)[1][-1]
        return out[0] if single else out

    def forward(self, x) -> np.ndarray:
        """Probability vectors for classifiers, raw outputs for regressors."""
        x, single = self._check_input(x)
        out = self._trace(x)[1][-1]
        if self.task == "classification":
            out = softmax(out)
        return out[0] if single else out

    __call__ = forward

    def predict_label(self, x) -> np.ndarray | int:
        if self.task != "classification":
            raise ModelError("predict_label needs a classification model")
        probs = self.forward(x)
        # np.argmax returns the first maximum, i.e. the lowest index on ties
        labels = np.argmax(probs, axis=-1)
        return int(labels) if np.ndim(labels) == 0 else labels

    def backward(self, x, head: Head, param_grads: bool = False):
        """Reverse-mode pass for a scalar head of the model outputs.

        ``head`` maps the batched model outputs (probabilities for a
        classifier) to per-row scalar values and their derivatives with
        respect to those outputs. Returns ``(values, input_grads)``, plus a
        list of ``(dW, db)`` summed over the batch when ``param_grads``.
        """
        x, single = self._check_input(x)
        pre, post = self._trace(x)
        out = post[-1]
        if self.task == "classification":
            probs = softmax(out)
            values, g = head(probs)
            g = np.asarray(g, dtype=np.float64)
            # softmax vector-Jacobian product
            g = probs * (g - np.sum(g * probs, axis=-1, keepdims=True))
        else:
            values, g = head(out)
            g = np.asarray(g, dtype=np.float64)
        grads = []
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            g = g * _activation_grad(layer.activation, pre[i], post[i + 1])
            if param_grads:
                grads.append((g.T @ post[i], g.sum(axis=0)))
            g = g @ layer.weights
            if not np.all(np.isfinite(g)):
                raise ModelError(f"non-finite gradient at layer {i}")
        values = np.asarray(values, dtype=np.float64)
        if single:
            values, g = values[0], g[0]
        if param_grads:
            return values, g, grads[::-1]
        return values, g

    def input_gradient(self, x, head: Head) -> np.ndarray:
        """Gradient of ``head(model(x))`` with respect to ``x``."""
        return self.backward(x, head)[1]

    def to_dict(self) -> dict:
        sig = self.signature
        doc = {"task": sig.task, "input_dim": sig.input_dim, "output_dim": sig.output_dim}
        if sig.output_min is not None:
            doc["output_min"] = sig.output_min
            doc["output_max"] = sig.output_max
        doc["layers"] = [
            {"activation": l.activation, "weights": l.weights.tolist(), "bias": l.bias.tolist()}
            for l in self.layers
        ]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Model":
        try:
            sig = ModelSignature(
                input_dim=int(doc["input_dim"]),
                output_dim=int(doc["output_dim"]),
                task=doc["task"],
                output_min=doc.get("output_min"),
                output_max=doc.get("output_max"),
            )
            raw_layers = doc["layers"]
        except (KeyError, TypeError) as exc:
            raise ModelError(f"malformed model manifest: missing {exc}") from exc
        layers = []
        for i, spec in enumerate(raw_layers):
            try:
                layers.append(Layer(np.asarray(spec["weights"], dtype=np.float64),
                                    np.asarray(spec["bias"], dtype=np.float64),
                                    spec.get("activation", "identity")))
            except (KeyError, ValueError, TypeError) as exc:
                raise ModelError(f"layer {i}: {exc}") from exc
        return cls(sig, tuple(layers))


def dense_model(sizes: Sequence[int], activations: Sequence[str], task: str = "classification",
                rng: np.random.Generator | None = None, output_bounds=None) -> Model:
    """Glorot-initialized model with layer widths ``sizes`` (input first)."""
    rng = np.random.default_rng(0) if rng is None else rng
    if len(activations) != len(sizes) - 1:
        raise ModelError("need one activation per layer")
    layers = []
    for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        layers.append(Layer(rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out), act))
    lo, hi = output_bounds if output_bounds is not None else (None, None)
    sig = ModelSignature(sizes[0], sizes[-1], task, lo, hi)
    return Model(sig, tuple(layers))


def save_model(model: Model, path) -> None:
    # repr-precise floats make the round trip bit-identical
    atomic_write_text(Path(path), json.dumps(model.to_dict(), indent=1) + "\n")


def load_model(path) -> Model:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"malformed model manifest: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelError("malformed model manifest: top level must be an object")
    return Model.from_dict(doc)
