"""Layer set for the two networks.

Activations are channels-last: dense layers see ``(batch, features)`` and
1-D convolutions see ``(batch, length, channels)``. Every layer caches what
it needs during :meth:`Layer.forward` and consumes the cache in
:meth:`Layer.backward`, which returns the gradient w.r.t. its input and
fills ``self.grads``.
"""

from __future__ import annotations

import enum
import math

import numpy as np

SIGMOID_EPS = 1e-7


class LayerKind(enum.IntEnum):
    DENSE = 0
    CONV1D = 1
    CONVT1D = 2
    DROPOUT = 3
    RELU = 4
    SIGMOID = 5
    FLATTEN = 6
    RESHAPE = 7


class ShapeError(ValueError):
    pass


class MissingCacheError(RuntimeError):
    pass


class Layer:
    kind: LayerKind

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.l2 = 0.0
        self._cache = None
        self.name = self.kind.name.lower()

    def forward(self, x: np.ndarray, training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        """Per-sample output shape (batch axis excluded)."""
        return input_shape

    def hyperparams(self) -> list[int | float]:
        return []

    def _pop_cache(self):
        if self._cache is None:
            raise MissingCacheError(f"{self.name}: backward called without a forward cache")
        cache, self._cache = self._cache, None
        return cache

    def zero_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def __repr__(self):
        hp = ", ".join(str(h) for h in self.hyperparams())
        return f"{type(self).__name__}({hp})"


def as_f32(value: float) -> float:
    """Round a real hyperparameter to f32, the precision model files store."""
    return float(np.float32(value))


def _uniform(rng, shape, limit, dtype):
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_limit(init: str, fan_in: int, fan_out: int) -> float:
    if init == "he":
        return math.sqrt(6.0 / fan_in)
    if init == "glorot":
        return math.sqrt(6.0 / (fan_in + fan_out))
    raise ValueError(f"unknown initializer {init!r}")


class Dense(Layer):
    kind = LayerKind.DENSE

    def __init__(self, in_features: int, units: int, l2: float = 0.0, init: str = "he",
                 rng=None, dtype=np.float32):
        super().__init__()
        self.in_features, self.units, self.l2 = in_features, units, as_f32(l2)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["W"] = _uniform(rng, (in_features, units), init_limit(init, in_features, units), dtype)
        self.params["b"] = np.zeros(units, dtype=dtype)

    def forward(self, x, training=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"{self.name}: expected (batch, {self.in_features}), got {x.shape}")
        self._cache = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        x = self._pop_cache()
        self.grads["W"] = x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"].T

    def output_shape(self, input_shape):
        if input_shape != (self.in_features,):
            raise ShapeError(f"{self.name}: expected input ({self.in_features},), got {input_shape}")
        return (self.units,)

    def hyperparams(self):
        return [self.in_features, self.units, self.l2]


# --- strided convolution primitives ---------------------------------------
#
# "same" geometry: out_len = ceil(in_len / stride), zero padding split with
# the extra sample on the right. The kernel is zero-extended to a multiple
# of the stride so that the padded input folds into (len / stride, stride * C)
# and the convolution becomes kernel/stride dense products.

def conv_geometry(in_len: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """Return ``(out_len, pad_left, padded_len)``; ``padded_len`` is a multiple of ``stride``."""
    out_len = -(-in_len // stride)
    pad_total = max((out_len - 1) * stride + kernel - in_len, 0)
    pad_left = pad_total // 2
    k_ext = -(-kernel // stride) * stride
    padded_len = (out_len - 1) * stride + k_ext
    return out_len, pad_left, padded_len


def _fold_kernel(w: np.ndarray, stride: int) -> np.ndarray:
    k, c, f = w.shape
    k_ext = -(-k // stride) * stride
    if k_ext != k:
        w = np.concatenate([w, np.zeros((k_ext - k, c, f), dtype=w.dtype)])
    return w.reshape(k_ext // stride, stride * c, f)


def _fold_input(x: np.ndarray, kernel: int, stride: int) -> tuple[np.ndarray, int, int]:
    xp, out_len, pad_left = _pad_input(x, kernel, stride)
    b, padded_len, c = xp.shape
    return xp.reshape(b, padded_len // stride, stride * c), out_len, pad_left


def _taps_matmul(xf: np.ndarray, q: int, out_len: int, wq: np.ndarray) -> np.ndarray:
    b, _, k = xf.shape
    win = np.ascontiguousarray(xf[:, q : q + out_len]).reshape(b * out_len, k)
    return (win @ wq).reshape(b, out_len, wq.shape[1])


# narrow-input layers (first conv, single-filter output) are cheaper as
# one product against an explicit window matrix
IM2COL_MAX_WIDTH = 64


def _pad_input(x: np.ndarray, kernel: int, stride: int) -> tuple[np.ndarray, int, int]:
    b, n, c = x.shape
    out_len, pad_left, padded_len = conv_geometry(n, kernel, stride)
    xp = np.zeros((b, padded_len, c), dtype=x.dtype)
    keep = min(n, padded_len - pad_left)
    xp[:, pad_left : pad_left + keep] = x[:, :keep]
    return xp, out_len, pad_left


def _im2col(x: np.ndarray, kernel: int, stride: int) -> tuple[np.ndarray, int]:
    """Window matrix ``(B * out_len, kernel * C)`` with tap-major columns."""
    b, _, c = x.shape
    xp, out_len, _ = _pad_input(x, kernel, stride)
    win = np.lib.stride_tricks.sliding_window_view(xp, kernel, axis=1)[:, : (out_len - 1) * stride + 1 : stride]
    cols = np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(b * out_len, kernel * c)
    return cols, out_len


def conv1d_forward(x: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    """Strided cross-correlation of ``x (B, L, C)`` with ``w (k, C, F)``."""
    kernel, c, f = w.shape
    b = x.shape[0]
    if kernel * c <= IM2COL_MAX_WIDTH:
        cols, out_len = _im2col(x, kernel, stride)
        return (cols @ w.reshape(kernel * c, f)).reshape(b, out_len, f)
    xf, out_len, _ = _fold_input(x, kernel, stride)
    wf = _fold_kernel(w, stride)
    y = _taps_matmul(xf, 0, out_len, wf[0])
    for q in range(1, wf.shape[0]):
        y += _taps_matmul(xf, q, out_len, wf[q])
    return y


def conv1d_backward_input(dy: np.ndarray, w: np.ndarray, stride: int, in_len: int) -> np.ndarray:
    """Adjoint of :func:`conv1d_forward` w.r.t. its input (length ``in_len``)."""
    kernel, c, f = w.shape
    b, out_len, _ = dy.shape
    out_chk, pad_left, padded_len = conv_geometry(in_len, kernel, stride)
    if out_chk != out_len:
        raise ShapeError(f"gradient length {out_len} does not match input length {in_len}")
    dy2 = dy.reshape(b * out_len, f)
    if kernel * c <= IM2COL_MAX_WIDTH:
        z = (dy2 @ w.reshape(kernel * c, f).T).reshape(b, out_len, kernel, c)
        dxp = np.zeros((b, padded_len, c), dtype=dy.dtype)
        span = (out_len - 1) * stride + 1
        for j in range(kernel):
            dxp[:, j : j + span : stride] += z[:, :, j]
    else:
        wf = _fold_kernel(w, stride)
        dxf = np.zeros((b, padded_len // stride, stride * c), dtype=dy.dtype)
        for q in range(wf.shape[0]):
            dxf[:, q : q + out_len] += (dy2 @ wf[q].T).reshape(b, out_len, stride * c)
        dxp = dxf.reshape(b, padded_len, c)
    dx = np.zeros((b, in_len, c), dtype=dy.dtype)
    keep = min(in_len, padded_len - pad_left)
    dx[:, :keep] = dxp[:, pad_left : pad_left + keep]
    return dx


def conv1d_backward_weight(x: np.ndarray, dy: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """Gradient of ``<conv1d_forward(x, w), dy>`` w.r.t. ``w``."""
    b, _, c = x.shape
    f = dy.shape[2]
    if kernel * c <= IM2COL_MAX_WIDTH:
        cols, out_len = _im2col(x, kernel, stride)
        return (cols.T @ dy.reshape(b * out_len, f)).reshape(kernel, c, f)
    xf, out_len, _ = _fold_input(x, kernel, stride)
    dy2 = dy.reshape(b * out_len, f)
    n_fold = xf.shape[1] - out_len + 1
    dwf = np.empty((n_fold, stride * c, f), dtype=dy.dtype)
    for q in range(n_fold):
        win = np.ascontiguousarray(xf[:, q : q + out_len]).reshape(b * out_len, stride * c)
        dwf[q] = win.T @ dy2
    return dwf.reshape(n_fold * stride, c, f)[:kernel]


class Conv1D(Layer):
    """Strided 1-D convolution, "same" padding, kernel ``(k, in_ch, filters)``."""

    kind = LayerKind.CONV1D

    def __init__(self, in_channels: int, filters: int, kernel: int, stride: int = 1,
                 l2: float = 0.0, init: str = "he", rng=None, dtype=np.float32):
        super().__init__()
        if kernel < 1 or stride < 1:
            raise ValueError("kernel and stride must be >= 1")
        self.in_channels, self.filters, self.kernel, self.stride = in_channels, filters, kernel, stride
        self.l2 = as_f32(l2)
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in, fan_out = kernel * in_channels, kernel * filters
        self.params["W"] = _uniform(rng, (kernel, in_channels, filters), init_limit(init, fan_in, fan_out), dtype)
        self.params["b"] = np.zeros(filters, dtype=dtype)

    def forward(self, x, training=False, rng=None):
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ShapeError(f"{self.name}: expected (batch, length, {self.in_channels}), got {x.shape}")
        self._cache = x
        return conv1d_forward(x, self.params["W"], self.stride) + self.params["b"]

    def backward(self, dy):
        x = self._pop_cache()
        self.grads["W"] = conv1d_backward_weight(x, dy, self.kernel, self.stride)
        self.grads["b"] = dy.sum(axis=(0, 1))
        return conv1d_backward_input(dy, self.params["W"], self.stride, x.shape[1])

    def output_shape(self, input_shape):
        if len(input_shape) != 2 or input_shape[1] != self.in_channels:
            raise ShapeError(f"{self.name}: expected (length, {self.in_channels}), got {input_shape}")
        return (-(-input_shape[0] // self.stride), self.filters)

    def hyperparams(self):
        return [self.in_channels, self.filters, self.kernel, self.stride, self.l2]


class ConvTranspose1D(Layer):
    """Transposed convolution: output length is ``in_len * stride``.

    Forward is exactly the input-adjoint of a :class:`Conv1D` whose kernel
    is ``W`` of shape ``(k, filters, in_ch)``.
    """

    kind = LayerKind.CONVT1D

    def __init__(self, in_channels: int, filters: int, kernel: int, stride: int = 1,
                 l2: float = 0.0, init: str = "he", rng=None, dtype=np.float32):
        super().__init__()
        if kernel < 1 or stride < 1:
            raise ValueError("kernel and stride must be >= 1")
        self.in_channels, self.filters, self.kernel, self.stride = in_channels, filters, kernel, stride
        self.l2 = as_f32(l2)
        rng = rng if rng is not None else np.random.default_rng(0)
        # each input sample feeds kernel/stride outputs per filter on average
        fan_in = max(1, kernel * in_channels // stride)
        fan_out = kernel * filters
        self.params["W"] = _uniform(rng, (kernel, filters, in_channels), init_limit(init, fan_in, fan_out), dtype)
        self.params["b"] = np.zeros(filters, dtype=dtype)

    def forward(self, x, training=False, rng=None):
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ShapeError(f"{self.name}: expected (batch, length, {self.in_channels}), got {x.shape}")
        self._cache = x
        out_len = x.shape[1] * self.stride
        return conv1d_backward_input(x, self.params["W"], self.stride, out_len) + self.params["b"]

    def backward(self, dy):
        x = self._pop_cache()
        self.grads["W"] = conv1d_backward_weight(dy, x, self.kernel, self.stride)
        self.grads["b"] = dy.sum(axis=(0, 1))
        return conv1d_forward(dy, self.params["W"], self.stride)

    def output_shape(self, input_shape):
        if len(input_shape) != 2 or input_shape[1] != self.in_channels:
            raise ShapeError(f"{self.name}: expected (length, {self.in_channels}), got {input_shape}")
        return (input_shape[0] * self.stride, self.filters)

    def hyperparams(self):
        return [self.in_channels, self.filters, self.kernel, self.stride, self.l2]


class Dropout(Layer):
    """Inverted dropout; identity outside training."""

    kind = LayerKind.DROPOUT

    def __init__(self, rate: float):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = as_f32(rate)

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0:
            self._cache = None if not training else 1.0
            return x
        if rng is None:
            raise ValueError("dropout in training mode needs an rng")
        mask = (rng.random(x.shape) >= self.rate).astype(x.dtype) / x.dtype.type(1 - self.rate)
        self._cache = mask
        return x * mask

    def backward(self, dy):
        mask = self._pop_cache()
        return dy * mask

    def hyperparams(self):
        return [self.rate]


class ReLU(Layer):
    kind = LayerKind.RELU

    def forward(self, x, training=False, rng=None):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, dy):
        return dy * self._pop_cache()


class Sigmoid(Layer):
    """Logistic output clipped to ``[1e-7, 1 - 1e-7]`` so it never saturates to 0 or 1."""

    kind = LayerKind.SIGMOID

    def forward(self, x, training=False, rng=None):
        e = np.exp(-np.abs(x))
        s = np.where(x >= 0, 1 / (1 + e), e / (1 + e))
        s = np.clip(s, SIGMOID_EPS, 1 - SIGMOID_EPS).astype(x.dtype, copy=False)
        self._cache = s
        return s

    def backward(self, dy):
        s = self._pop_cache()
        return dy * s * (1 - s)


class Flatten(Layer):
    kind = LayerKind.FLATTEN

    def forward(self, x, training=False, rng=None):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._pop_cache())

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)


class Reshape(Layer):
    kind = LayerKind.RESHAPE

    def __init__(self, target: tuple[int, ...]):
        super().__init__()
        self.target = tuple(int(t) for t in target)

    def forward(self, x, training=False, rng=None):
        if int(np.prod(x.shape[1:])) != int(np.prod(self.target)):
            raise ShapeError(f"{self.name}: cannot reshape {x.shape[1:]} to {self.target}")
        self._cache = x.shape
        return x.reshape((x.shape[0],) + self.target)

    def backward(self, dy):
        return dy.reshape(self._pop_cache())

    def output_shape(self, input_shape):
        if int(np.prod(input_shape)) != int(np.prod(self.target)):
            raise ShapeError(f"{self.name}: cannot reshape {input_shape} to {self.target}")
        return self.target

    def hyperparams(self):
        return list(self.target)
