"""Deep feed-forward waveform classifier over 4096-point magnitude-FFT features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import FeatureKind, FeatureVector
from .neural import Adamax, Dense, Dropout, Model, ReLU, Sigmoid, fit
from .sigsynth import KNOWN_CLASSES, WaveformClass

INPUT_SIZE = 4096
HIDDEN_UNITS = (64, 100, 32, 16)
DROPOUT_RATE = 0.2
N_CLASSES = len(KNOWN_CLASSES)


class FeatureKindError(ValueError):
    pass


def build_classifier(seed: int = 0, dtype=np.float32, input_size: int = INPUT_SIZE) -> Model:
    """Dense 64-100-32-16 with ReLU and dropout 0.2 after each, then 4 sigmoid outputs."""
    rng = np.random.default_rng(seed)
    layers = []
    width = input_size
    for units in HIDDEN_UNITS:
        layers += [Dense(width, units, init="he", rng=rng, dtype=dtype), ReLU(), Dropout(DROPOUT_RATE)]
        width = units
    layers += [Dense(width, N_CLASSES, init="glorot", rng=rng, dtype=dtype), Sigmoid()]
    return Model(layers, (input_size,))


def one_hot(class_ids) -> np.ndarray:
    class_ids = np.asarray(class_ids, dtype=int)
    if np.any((class_ids < 0) | (class_ids >= N_CLASSES)):
        raise ValueError("label outside the four known classes")
    out = np.zeros((class_ids.size, N_CLASSES))
    out[np.arange(class_ids.size), class_ids] = 1
    return out


@dataclass
class TrainedClassifier:
    model: Model
    loss_history: list[float]


def train_classifier(model: Model, features: np.ndarray, labels, epochs: int = 50, batch_size: int = 128,
                     seed: int = 0, kind: FeatureKind = FeatureKind.FFT_MAG, lr: float = 0.002,
                     callback=None) -> TrainedClassifier:
    """BCE against one-hot targets with Adamax; dropout active during training."""
    if FeatureKind(kind) is not FeatureKind.FFT_MAG:
        raise FeatureKindError("classifier trains on FFT_MAG features")
    features = np.asarray(features)
    if features.ndim != 2 or features.shape[1] != model.input_shape[0]:
        raise FeatureKindError(f"expected features of length {model.input_shape[0]}, got {features.shape}")
    result = fit(model, features, one_hot(labels), epochs, batch_size, seed, optimizer=Adamax(lr=lr),
                 callback=callback)
    return TrainedClassifier(result.model, result.loss_history)


def predict_proba(model: Model, features: np.ndarray) -> np.ndarray:
    features = np.atleast_2d(np.asarray(features))
    if features.shape[1] != model.input_shape[0]:
        raise FeatureKindError(f"expected features of length {model.input_shape[0]}, got {features.shape[1]}")
    return model.predict(features)


def predict_labels(model: Model, features: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class id
    return np.argmax(predict_proba(model, features), axis=1)


def predict(model: Model, feature: FeatureVector) -> tuple[np.ndarray, WaveformClass]:
    if feature.kind is not FeatureKind.FFT_MAG:
        raise FeatureKindError(f"classifier needs FFT_MAG features, got {feature.kind.name}")
    probs = predict_proba(model, feature.values)[0]
    return probs, WaveformClass(int(np.argmax(probs)))
