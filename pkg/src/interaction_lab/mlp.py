"""Small dense ReLU classifier with hand-derived reverse-mode gradients.

Hidden layers use ReLU (subgradient 0 at the kink, for determinism), the
output layer is identity, so the network emits raw class logits. Gradients
are computed by explicit backpropagation rather than an autodiff framework;
every loss exposed by the library is finite-difference checked against this
implementation, so keep forward and backward in lockstep when editing.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionError, DomainError, NumericError, SchemaError, ValidationError
from .games import Baseline, SubsetMask, make_masked_input
from .rng import make_rng

MODEL_FORMAT_VERSION = 1


@dataclass
class ParamGrads:
    """Gradient of a scalar loss with respect to every parameter and the input.

    inputs is None for losses whose forward pass rewrites the batch (masked
    stacks); only same-batch gradients combine input terms.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray | None

    def add_scaled(self, other: "ParamGrads", factor: float) -> None:
        for w, ow in zip(self.weights, other.weights):
            w += factor * ow
        for b, ob in zip(self.biases, other.biases):
            b += factor * ob
        if self.inputs is not None and other.inputs is not None:
            self.inputs = self.inputs + factor * other.inputs


class MLP:
    """Feed-forward network: X @ W + b per layer, ReLU between, logits out."""

    def __init__(self, layer_sizes: Sequence[int], seed: int = 0):
        sizes = tuple(int(s) for s in layer_sizes)
        if len(sizes) < 2:
            raise ValidationError(f"need at least input and output layers, got {sizes}")
        if any(s < 1 for s in sizes):
            raise ValidationError(f"layer sizes must be positive, got {sizes}")
        self.layer_sizes = sizes
        self.seed = int(seed)
        self.meta: dict = {}
        rng = make_rng(self.seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            limit = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @classmethod
    def from_params(cls, layer_sizes: Sequence[int], weights: Sequence[np.ndarray],
                    biases: Sequence[np.ndarray], seed: int = 0) -> "MLP":
        model = cls(layer_sizes, seed=seed)
        if len(weights) != len(model.weights) or len(biases) != len(model.biases):
            raise DimensionError("parameter list lengths do not match the architecture")
        for l, (w, b) in enumerate(zip(weights, biases)):
            w = np.asarray(w, dtype=float)
            b = np.asarray(b, dtype=float)
            if w.shape != model.weights[l].shape or b.shape != model.biases[l].shape:
                raise DimensionError(
                    f"layer {l} expects shapes {model.weights[l].shape}/"
                    f"{model.biases[l].shape}, got {w.shape}/{b.shape}")
            model.weights[l] = w.copy()
            model.biases[l] = b.copy()
        return model

    @property
    def num_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def num_features(self) -> int:
        return self.layer_sizes[0]

    def copy(self) -> "MLP":
        clone = MLP.from_params(self.layer_sizes, self.weights, self.biases, seed=self.seed)
        clone.meta = dict(self.meta)
        return clone

    def _check_input(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.num_features:
            raise DimensionError(
                f"expected input of shape (rows, {self.num_features}), got {X.shape}")
        return X

    def forward(self, X) -> np.ndarray:
        """Logits for a (rows, features) batch."""
        h = self._check_input(X)
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if l != last:
                h = np.maximum(h, 0.0)
        return h

    def forward_trace(self, X):
        """Logits plus the per-layer inputs and pre-activations backward needs."""
        h = self._check_input(X)
        inputs = []
        pre = []
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w + b
            pre.append(z)
            h = np.maximum(z, 0.0) if l != last else z
        return h, (inputs, pre)

    def backward(self, trace, dlogits: np.ndarray) -> ParamGrads:
        """Backpropagate d(loss)/d(logits) through the trace of forward_trace."""
        inputs, pre = trace
        dz = np.asarray(dlogits, dtype=float)
        if dz.shape != pre[-1].shape:
            raise DimensionError(
                f"dlogits shape {dz.shape} does not match logits shape {pre[-1].shape}")
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        for l in range(len(self.weights) - 1, -1, -1):
            grads_w[l] = inputs[l].T @ dz
            grads_b[l] = dz.sum(axis=0)
            dh = dz @ self.weights[l].T
            if l > 0:
                dz = dh * (pre[l - 1] > 0.0)
        return ParamGrads(weights=grads_w, biases=grads_b, inputs=dh)


def zero_grads(model: MLP, batch_rows: int) -> ParamGrads:
    return ParamGrads(weights=[np.zeros_like(w) for w in model.weights],
                      biases=[np.zeros_like(b) for b in model.biases],
                      inputs=np.zeros((batch_rows, model.num_features)))


def masked_forward(model: MLP, x, S: SubsetMask, baseline: Baseline) -> np.ndarray:
    """Logits on x with the players outside S replaced by the baseline."""
    row = make_masked_input(x, S, baseline)
    return model.forward(row[None, :])[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    return z - logsumexp(z, axis=-1, keepdims=True)


def _check_labels(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or len(labels) != len(logits):
        raise DimensionError(
            f"labels shape {labels.shape} does not match {len(logits)} logit rows")
    if len(labels) == 0:
        raise ValidationError("need at least one row")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise DomainError(f"labels must lie in [0, {logits.shape[1]})")
    return labels.astype(int)


def cross_entropy(logits: np.ndarray, labels) -> float:
    """Mean negative log-likelihood of the labels under softmax(logits)."""
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    labels = _check_labels(logits, labels)
    picked = log_softmax(logits)[np.arange(len(labels)), labels]
    return float(-picked.mean())


def cross_entropy_grad(logits: np.ndarray, labels) -> np.ndarray:
    """d(mean CE)/d(logits): (softmax - onehot) / rows."""
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    labels = _check_labels(logits, labels)
    g = softmax(logits)
    g[np.arange(len(labels)), labels] -= 1.0
    return g / len(labels)


def accuracy(logits: np.ndarray, labels) -> float:
    """Fraction of rows whose argmax logit equals the label (first index on ties)."""
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    labels = _check_labels(logits, labels)
    return float((logits.argmax(axis=1) == labels).mean())


def ce_value_and_grad(model: MLP, X, labels) -> tuple[float, ParamGrads]:
    """Plain classification loss and its exact parameter gradient."""
    logits, trace = model.forward_trace(X)
    loss = cross_entropy(logits, labels)
    if not np.isfinite(loss):
        raise NumericError(f"cross-entropy is not finite: {loss}")
    return loss, model.backward(trace, cross_entropy_grad(logits, labels))


def get_flat_params(model: MLP) -> np.ndarray:
    parts = []
    for w, b in zip(model.weights, model.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def set_flat_params(model: MLP, vec: np.ndarray) -> None:
    vec = np.asarray(vec, dtype=float)
    offset = 0
    for l in range(len(model.weights)):
        for attr, arr in (("weights", model.weights[l]), ("biases", model.biases[l])):
            chunk = vec[offset:offset + arr.size]
            if chunk.size != arr.size:
                raise DimensionError("flat vector does not match the parameter count")
            getattr(model, attr)[l] = chunk.reshape(arr.shape).copy()
            offset += arr.size
    if offset != vec.size:
        raise DimensionError(
            f"flat vector has {vec.size} entries, model has {offset} parameters")


def flatten_grads(grads: ParamGrads) -> np.ndarray:
    parts = []
    for w, b in zip(grads.weights, grads.biases):
        parts.append(np.asarray(w).ravel())
        parts.append(np.asarray(b).ravel())
    return np.concatenate(parts)


def save_model(path, model: MLP, meta=None) -> None:
    """JSON with layer sizes, parameters, and init seed; round-trips bit-exactly.

    Extra provenance (config hash, seed of the producing run, preprocessing
    stats) goes under the "meta" key and is restored onto model.meta on load.
    """
    obj = {
        "version": MODEL_FORMAT_VERSION,
        "layer_sizes": list(model.layer_sizes),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "seed": model.seed,
    }
    merged = dict(model.meta)
    if meta:
        merged.update(meta)
    if merged:
        obj["meta"] = merged
    Path(path).write_text(json.dumps(obj) + "\n", encoding="utf-8", newline="")


def load_model(path) -> MLP:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read model {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise SchemaError("model file must hold a JSON object")
    version = obj.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise SchemaError(
            f"model format version {version!r} is not supported "
            f"(expected {MODEL_FORMAT_VERSION})")
    for key in ("layer_sizes", "weights", "biases", "seed"):
        if key not in obj:
            raise SchemaError(f"model file is missing the {key!r} field")
    try:
        weights = [np.asarray(w, dtype=float) for w in obj["weights"]]
        biases = [np.asarray(b, dtype=float) for b in obj["biases"]]
        model = MLP.from_params(obj["layer_sizes"], weights, biases, seed=int(obj["seed"]))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"malformed model parameters: {exc}") from None
    for arr in (*model.weights, *model.biases):
        if not np.all(np.isfinite(arr)):
            raise SchemaError("model parameters must all be finite")
    meta = obj.get("meta", {})
    if not isinstance(meta, dict):
        raise SchemaError("model meta must be a JSON object")
    model.meta = meta
    return model
