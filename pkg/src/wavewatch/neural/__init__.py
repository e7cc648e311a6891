"""Small reverse-mode training engine: layers, BCE loss, Adamax, serialization."""

from .layers import (
    Conv1D,
    ConvTranspose1D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    LayerKind,
    MissingCacheError,
    ReLU,
    Reshape,
    ShapeError,
    Sigmoid,
)
from .model import Model, TrainResult, bce_loss, fit, train_epoch
from .optim import SGD, Adam, Adamax, Optimizer, make_optimizer
from .serialize import ModelFormatError, load_model, save_model

__all__ = [
    "Adam", "Adamax", "Conv1D", "ConvTranspose1D", "Dense", "Dropout", "Flatten", "Layer",
    "LayerKind", "MissingCacheError", "Model", "ModelFormatError", "Optimizer", "ReLU",
    "Reshape", "SGD", "ShapeError", "Sigmoid", "TrainResult", "bce_loss", "fit",
    "load_model", "make_optimizer", "save_model", "train_epoch",
]
