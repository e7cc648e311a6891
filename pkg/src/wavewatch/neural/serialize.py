"""Binary model files.

Layout, all little-endian::

    b"SWNN" | version u16 | layer count u16 | input ndim u8 | input dims u32...
    per layer:
        kind u8 | hyperparameter count u8 | hyperparameters u32...
        tensor count u8 | per tensor: ndim u8 | dims u32... | f32 data

Real-valued hyperparameters (dropout rate, L2 coefficient) are stored as
the bit pattern of their f32 value. Parameters are always written as f32,
so a float32 model round-trips bit-exactly.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .layers import (
    Conv1D, ConvTranspose1D, Dense, Dropout, Flatten, Layer, LayerKind, ReLU, Reshape, Sigmoid,
)
from .model import Model

MAGIC = b"SWNN"
VERSION = 1


class ModelFormatError(ValueError):
    pass


class NotAModelFileError(ModelFormatError):
    pass


class ModelVersionError(ModelFormatError):
    pass


class TruncatedModelError(ModelFormatError):
    pass


def _f32_bits(value: float) -> int:
    return struct.unpack("<I", struct.pack("<f", value))[0]


def _bits_f32(bits: int) -> float:
    return struct.unpack("<f", struct.pack("<I", bits))[0]


# which hyperparameter slots hold reals
_REAL_SLOTS = {
    LayerKind.DENSE: {2},
    LayerKind.CONV1D: {4},
    LayerKind.CONVT1D: {4},
    LayerKind.DROPOUT: {0},
}


def _encode_hyper(layer: Layer) -> list[int]:
    real = _REAL_SLOTS.get(layer.kind, set())
    return [_f32_bits(h) if i in real else int(h) for i, h in enumerate(layer.hyperparams())]


def _decode_hyper(kind: LayerKind, raw: list[int]) -> list:
    real = _REAL_SLOTS.get(kind, set())
    return [_bits_f32(h) if i in real else h for i, h in enumerate(raw)]


def model_to_bytes(model: Model) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HH", VERSION, len(model.layers)))
    buf.write(struct.pack("<B", len(model.input_shape)))
    buf.write(struct.pack(f"<{len(model.input_shape)}I", *model.input_shape))
    for layer in model.layers:
        hyper = _encode_hyper(layer)
        buf.write(struct.pack("<BB", int(layer.kind), len(hyper)))
        buf.write(struct.pack(f"<{len(hyper)}I", *hyper))
        buf.write(struct.pack("<B", len(layer.params)))
        for tensor in layer.params.values():
            buf.write(struct.pack("<B", tensor.ndim))
            buf.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            buf.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedModelError(f"model file truncated at byte {self.pos} (wanted {n} more)")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))


def _build_layer(kind: LayerKind, hyper: list, tensors: list[np.ndarray]) -> Layer:
    if kind is LayerKind.DENSE:
        layer = Dense(hyper[0], hyper[1], l2=hyper[2])
    elif kind is LayerKind.CONV1D:
        layer = Conv1D(hyper[0], hyper[1], hyper[2], hyper[3], l2=hyper[4])
    elif kind is LayerKind.CONVT1D:
        layer = ConvTranspose1D(hyper[0], hyper[1], hyper[2], hyper[3], l2=hyper[4])
    elif kind is LayerKind.DROPOUT:
        layer = Dropout(hyper[0])
    elif kind is LayerKind.RELU:
        layer = ReLU()
    elif kind is LayerKind.SIGMOID:
        layer = Sigmoid()
    elif kind is LayerKind.FLATTEN:
        layer = Flatten()
    else:
        layer = Reshape(tuple(hyper))
    if len(tensors) != len(layer.params):
        raise ModelFormatError(f"{kind.name} expects {len(layer.params)} tensors, file has {len(tensors)}")
    for key, tensor in zip(layer.params, tensors):
        if tensor.shape != layer.params[key].shape:
            raise ModelFormatError(f"{kind.name}.{key}: shape {tensor.shape} != {layer.params[key].shape}")
        layer.params[key] = tensor
    return layer


def model_from_bytes(data: bytes) -> Model:
    r = _Reader(data)
    if len(data) < 4 or r.take(4) != MAGIC:
        raise NotAModelFileError("not a model file")
    version, n_layers = r.unpack("HH")
    if version != VERSION:
        raise ModelVersionError(f"unsupported model format version {version}")
    (ndim,) = r.unpack("B")
    input_shape = r.unpack(f"{ndim}I")
    layers = []
    for _ in range(n_layers):
        kind_id, n_hyper = r.unpack("BB")
        try:
            kind = LayerKind(kind_id)
        except ValueError:
            raise ModelFormatError(f"unknown layer kind {kind_id}") from None
        hyper = _decode_hyper(kind, list(r.unpack(f"{n_hyper}I")))
        (n_tensors,) = r.unpack("B")
        tensors = []
        for _ in range(n_tensors):
            (tdim,) = r.unpack("B")
            shape = r.unpack(f"{tdim}I")
            count = int(np.prod(shape))
            tensors.append(np.frombuffer(r.take(4 * count), dtype="<f4").astype(np.float32).reshape(shape))
        layers.append(_build_layer(kind, hyper, tensors))
    if r.pos != len(data):
        raise ModelFormatError(f"{len(data) - r.pos} trailing bytes after last layer")
    return Model(layers, input_shape)


def save_model(model: Model, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path) -> Model:
    return model_from_bytes(Path(path).read_bytes())
