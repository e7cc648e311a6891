"""Sequential model, binary cross-entropy, and the mini-batch training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .layers import Layer, ShapeError
from .optim import Adamax, Optimizer

log = logging.getLogger(__name__)

BCE_EPS = 1e-7


def bce_loss(prediction: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. ``prediction``.

    ``prediction`` is clamped to ``[1e-7, 1 - 1e-7]``. The gradient is the
    unclamped formula evaluated at the clamped point, so saturated outputs
    still receive a signal.
    """
    if prediction.shape != target.shape:
        raise ShapeError(f"prediction {prediction.shape} vs target {target.shape}")
    p = np.clip(prediction.astype(np.float64), BCE_EPS, 1 - BCE_EPS)
    t = target.astype(np.float64)
    loss = -np.mean(t * np.log(p) + (1 - t) * np.log(1 - p))
    grad = (p - t) / (p * (1 - p)) / p.size
    return float(loss), grad.astype(prediction.dtype, copy=False)


class Model:
    """Ordered layer stack with a known per-sample input shape."""

    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...]):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.training = False
        self.output_shape = self._check_shapes()

    def _check_shapes(self) -> tuple[int, ...]:
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer!r}): {exc}") from None
        return shape

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params.values()]

    def gradients(self) -> list[np.ndarray]:
        return [layer.grads[k] for layer in self.layers for k in layer.params]

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    @property
    def dtype(self):
        params = self.parameters()
        return params[0].dtype if params else np.dtype(np.float64)

    def forward(self, x: np.ndarray, training: bool | None = None, rng=None) -> np.ndarray:
        training = self.training if training is None else training
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"input shape {x.shape[1:]} does not match model input {self.input_shape}")
        for i, layer in enumerate(self.layers):
            try:
                x = layer.forward(x, training=training, rng=rng)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer!r}): {exc}") from None
        return x

    def predict(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Inference-mode forward in batches; caches are dropped."""
        x = np.asarray(x, dtype=self.dtype)
        out = [self.forward(x[i : i + batch_size], training=False) for i in range(0, len(x), batch_size)]
        for layer in self.layers:
            layer._cache = None
        if not out:
            return np.zeros((0,) + self.output_shape, dtype=self.dtype)
        return np.concatenate(out)

    def backward(self, dy: np.ndarray, include_l2: bool = True) -> np.ndarray:
        """Backpropagate ``dy``, leaving parameter gradients in each layer.

        With ``include_l2`` the weight gradients also carry ``2 * l2 * W``.
        """
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        if include_l2:
            self.add_l2_gradients()
        return dy

    def add_l2_gradients(self) -> None:
        for layer in self.layers:
            if layer.l2 and "W" in layer.params:
                layer.grads["W"] = layer.grads["W"] + 2 * layer.l2 * layer.params["W"]

    def l2_penalty(self) -> float:
        return float(sum(
            layer.l2 * np.sum(layer.params["W"].astype(np.float64) ** 2)
            for layer in self.layers if layer.l2 and "W" in layer.params
        ))

    def copy(self) -> Model:
        import copy

        return copy.deepcopy(self)


def _accumulate_step(model: Model, xb, yb, loss_fn, rng, chunk: int | None) -> float:
    """Forward/backward over ``xb`` in chunks; gradients are the full-batch mean."""
    n = len(xb)
    chunk = n if not chunk or chunk >= n else chunk
    total_grads = None
    loss = 0.0
    for i in range(0, n, chunk):
        xc, yc = xb[i : i + chunk], yb[i : i + chunk]
        out = model.forward(xc, training=True, rng=rng)
        lc, dy = loss_fn(out, yc)
        weight = len(xc) / n
        loss += lc * weight
        model.backward(dy * dy.dtype.type(weight), include_l2=False)
        grads = model.gradients()
        if total_grads is None:
            total_grads = [g.copy() for g in grads]
        else:
            for acc, g in zip(total_grads, grads):
                acc += g
    it = iter(total_grads)
    for layer in model.layers:
        for key in layer.params:
            layer.grads[key] = next(it)
    model.add_l2_gradients()
    return loss + model.l2_penalty()


def train_epoch(model: Model, x: np.ndarray, y: np.ndarray, batch_size: int, optimizer: Optimizer,
                seed, loss_fn=bce_loss, chunk: int | None = None) -> float:
    """One pass over ``(x, y)`` in seeded shuffled mini-batches; returns the mean batch loss."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if len(x) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(x))
    losses = []
    for start in range(0, len(x), batch_size):
        idx = order[start : start + batch_size]
        losses.append(_accumulate_step(model, x[idx], y[idx], loss_fn, rng, chunk))
        optimizer.step(model.parameters(), model.gradients())
    return float(np.mean(losses))


@dataclass
class TrainResult:
    model: Model
    loss_history: list[float] = field(default_factory=list)


def fit(model: Model, x: np.ndarray, y: np.ndarray, epochs: int, batch_size: int, seed: int,
        optimizer: Optimizer | None = None, loss_fn=bce_loss, chunk: int | None = None,
        callback=None) -> TrainResult:
    """Train in place for ``epochs``; epoch ``e`` uses seed ``(seed, e)``."""
    optimizer = optimizer or Adamax()
    x = np.asarray(x, dtype=model.dtype)
    y = np.asarray(y, dtype=model.dtype)
    history = []
    model.training = True
    try:
        for epoch in range(epochs):
            loss = train_epoch(model, x, y, batch_size, optimizer, [seed, epoch], loss_fn, chunk)
            history.append(loss)
            log.info("epoch %d/%d loss %.6f", epoch + 1, epochs, loss)
            if callback is not None:
                callback(epoch, loss)
    finally:
        model.training = False
    return TrainResult(model, history)
