"""Fully-connected ReLU network on a flat parameter vector.

Parameters live in one contiguous float64 array so that strategies can treat
the model as a point in R^n (anchors, Fisher diagonals, penalties).  Each
layer occupies a ``(fan_in, fan_out)`` weight block followed by its bias.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import EmptyInputError, NumericError, ShapeError


@dataclass(frozen=True)
class LayerSpec:
    """Layer widths ``[m_0, m_1, ..., m_out]``; ReLU on hidden layers, softmax on output."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) < 3:
            raise ShapeError(f"need input, at least one hidden and an output layer, got {sizes}")
        if any(s < 1 for s in sizes):
            raise ShapeError(f"layer widths must be >= 1, got {sizes}")

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def n_classes(self) -> int:
        return self.sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))

    def blocks(self) -> list[tuple[int, int, int]]:
        """(offset, fan_in, fan_out) for each layer, in storage order."""
        out = []
        offset = 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            out.append((offset, a, b))
            offset += a * b + b
        return out


@dataclass
class ModelWeights:
    values: np.ndarray
    spec: LayerSpec

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size != self.spec.n_params:
            raise ShapeError(
                f"expected {self.spec.n_params} parameters for {self.spec.sizes}, got shape {self.values.shape}"
            )

    def layers(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield ``(W, b)`` views into ``values``."""
        for offset, a, b in self.spec.blocks():
            W = self.values[offset:offset + a * b].reshape(a, b)
            yield W, self.values[offset + a * b:offset + a * b + b]

    def copy(self) -> "ModelWeights":
        return ModelWeights(self.values.copy(), self.spec)

    @classmethod
    def zeros(cls, spec: LayerSpec) -> "ModelWeights":
        return cls(np.zeros(spec.n_params), spec)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    max_iterations: int = 100
    seed: int = 0
    # None means full-batch gradient descent
    batch_size: int | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.max_iterations < 0:
            raise ValueError(f"max_iterations must be >= 0, got {self.max_iterations}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def init_weights(spec: LayerSpec, seed: int) -> ModelWeights:
    """Scaled uniform init, U(-sqrt(6/(fan_in+fan_out)), +...), biases zero."""
    rng = np.random.default_rng(seed)
    w = ModelWeights.zeros(spec)
    for W, _ in w.layers():
        limit = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
        W[...] = rng.uniform(-limit, limit, size=W.shape)
    return w


def _as_batch(w: ModelWeights, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != w.spec.n_inputs:
        raise ShapeError(f"input width {x.shape[-1] if x.ndim else None} does not match model input {w.spec.n_inputs}")
    return x


def _check_labels(w: ModelWeights, x: np.ndarray, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if y.shape[0] != x.shape[0]:
        raise ShapeError(f"{x.shape[0]} inputs but {y.shape[0]} labels")
    if y.size and (y.min() < 0 or y.max() >= w.spec.n_classes):
        raise ShapeError(f"labels must lie in [0, {w.spec.n_classes})")
    return y


def _forward_cache(w: ModelWeights, x: np.ndarray):
    acts = [x]
    pre = []
    layers = list(w.layers())
    a = x
    for W, b in layers[:-1]:
        z = a @ W + b
        pre.append(z)
        a = np.maximum(z, 0.0)
        acts.append(a)
    W, b = layers[-1]
    logits = a @ W + b
    return logits, acts, pre, layers


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward(w: ModelWeights, x) -> np.ndarray:
    """Class probabilities for one feature vector (1-D result) or a batch (2-D)."""
    single = np.ndim(x) == 1
    logits, *_ = _forward_cache(w, _as_batch(w, x))
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    return p[0] if single else p


def _backward(w: ModelWeights, acts, pre, layers, delta: np.ndarray, square: bool = False) -> np.ndarray:
    # delta: d(objective)/d(logits), one row per sample.
    # With square=True the per-sample gradients are squared before summing.
    grad = np.empty_like(w.values)
    blocks = w.spec.blocks()
    for li in range(len(layers) - 1, -1, -1):
        offset, a_in, a_out = blocks[li]
        a = acts[li]
        if square:
            gW = (a * a).T @ (delta * delta)
            gb = (delta * delta).sum(axis=0)
        else:
            gW = a.T @ delta
            gb = delta.sum(axis=0)
        grad[offset:offset + a_in * a_out] = gW.reshape(-1)
        grad[offset + a_in * a_out:offset + a_in * a_out + a_out] = gb
        if li > 0:
            delta = (delta @ layers[li][0].T) * (pre[li - 1] > 0)
    return grad


def loss_and_grad(w: ModelWeights, x, y) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch and its exact gradient."""
    x = _as_batch(w, x)
    if x.shape[0] == 0:
        raise EmptyInputError("loss_and_grad needs at least one sample")
    y = _check_labels(w, x, y)
    logits, acts, pre, layers = _forward_cache(w, x)
    logp = _log_softmax(logits)
    rows = np.arange(x.shape[0])
    loss = float(-logp[rows, y].mean())
    delta = np.exp(logp)
    delta[rows, y] -= 1.0
    delta /= x.shape[0]
    return loss, _backward(w, acts, pre, layers, delta)


def mean_squared_log_likelihood_grad(w: ModelWeights, x, y) -> np.ndarray:
    """Mean over samples of the squared per-sample gradient of log p(y|x, w).

    Per-sample gradients of a dense layer are outer products, so their squares
    sum to ``(a**2).T @ (delta**2)``; no per-sample loop is needed.
    """
    x = _as_batch(w, x)
    if x.shape[0] == 0:
        raise EmptyInputError("need at least one sample")
    y = _check_labels(w, x, y)
    logits, acts, pre, layers = _forward_cache(w, x)
    delta = np.exp(_log_softmax(logits))
    delta[np.arange(x.shape[0]), y] -= 1.0
    return _backward(w, acts, pre, layers, delta, square=True) / x.shape[0]


def gd_step(w, grad, learning_rate: float):
    """``w - learning_rate * grad``; accepts ModelWeights or a bare parameter array."""
    values = w.values if isinstance(w, ModelWeights) else np.asarray(w, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != values.shape:
        raise ShapeError(f"gradient shape {grad.shape} != weights shape {values.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient entries")
    stepped = values - learning_rate * grad
    return ModelWeights(stepped, w.spec) if isinstance(w, ModelWeights) else stepped


def predict(w: ModelWeights, x) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(forward(w, _as_batch(w, x)), axis=1)


def count_correct(w: ModelWeights, x, y) -> int:
    x = _as_batch(w, x)
    y = _check_labels(w, x, y)
    return int(np.count_nonzero(predict(w, x) == y))


def evaluate_accuracy(w: ModelWeights, x, y) -> float:
    x = _as_batch(w, x)
    if x.shape[0] == 0:
        raise EmptyInputError("cannot evaluate accuracy on an empty set")
    return count_correct(w, x, y) / x.shape[0]
