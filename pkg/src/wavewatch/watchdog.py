"""Convolutional autoencoder watchdog and RMSE region thresholds.

A signal is KNOWN when its reconstruction RMSE falls inside any calibrated
``[min, max]`` interval and UNKNOWN otherwise. Three region designs are
supported:

* ``TWO``: one interval pooled over all known classes,
* ``THREE``: one for the radar class (LFM) and one pooled over the
  communication classes,
* ``FIVE``: one per known class.

Finer designs nest inside coarser ones, so they can only reject more.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import SUPPORTED_NFFT, FeatureKind
from .neural import Adamax, Conv1D, ConvTranspose1D, Dense, Flatten, Model, ReLU, Reshape, Sigmoid, fit
from .sigsynth import COMM_CLASSES, KNOWN_CLASSES, WaveformClass

ENCODER_FILTERS = (256, 128, 32)
LATENT_UNITS = 16
KERNEL = 16
STRIDE = 4
L2_COEFF = 0.1
DEFAULT_LR = 0.1


class FeatureKindError(ValueError):
    pass


class CorpusRejectedError(ValueError):
    pass


class Design(enum.Enum):
    TWO = "two"
    THREE = "three"
    FIVE = "five"


class Verdict(enum.Enum):
    KNOWN = "KNOWN"
    UNKNOWN = "UNKNOWN"


def build_autoencoder(nfft: int = 4096, seed: int = 0, dtype=np.float32, l2: float = L2_COEFF) -> Model:
    """Three stride-4 convolutions down to a 16-unit code and four transposed convolutions back."""
    if nfft not in SUPPORTED_NFFT:
        raise ValueError(f"nfft must be one of {SUPPORTED_NFFT}, got {nfft}")
    rng = np.random.default_rng(seed)
    bottleneck_len = nfft // STRIDE ** len(ENCODER_FILTERS)
    flat = bottleneck_len * ENCODER_FILTERS[-1]
    layers = []
    channels = 1
    for filters in ENCODER_FILTERS:
        layers += [Conv1D(channels, filters, KERNEL, STRIDE, l2=l2, rng=rng, dtype=dtype), ReLU()]
        channels = filters
    layers += [
        Flatten(),
        Dense(flat, LATENT_UNITS, rng=rng, dtype=dtype), ReLU(),
        Dense(LATENT_UNITS, flat, rng=rng, dtype=dtype), ReLU(),
        Reshape((bottleneck_len, ENCODER_FILTERS[-1])),
    ]
    for filters in (32, 128, 256):
        layers += [ConvTranspose1D(channels, filters, KERNEL, STRIDE, l2=l2, rng=rng, dtype=dtype), ReLU()]
        channels = filters
    layers += [ConvTranspose1D(channels, 1, KERNEL, 1, l2=l2, init="glorot", rng=rng, dtype=dtype), Sigmoid()]
    return Model(layers, (nfft, 1))


def autoencoder_nfft(model: Model) -> int:
    return model.input_shape[0]


def _as_batch(model: Model, features) -> np.ndarray:
    x = np.asarray(features)
    if x.ndim == 1:
        x = x[None, :]
    nfft = autoencoder_nfft(model)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.shape[1:] != (nfft, 1):
        raise FeatureKindError(f"expected PSD features of length {nfft}, got shape {x.shape}")
    return x


@dataclass
class TrainedWatchdog:
    model: Model
    loss_history: list[float]


def train_watchdog(model: Model, features, epochs: int = 50, batch_size: int = 128, lr: float = DEFAULT_LR,
                   seed: int = 0, kind: FeatureKind = FeatureKind.PSD_DB, snr_db=None,
                   declared_snr_floor_db: float | None = None, chunk: int = 32,
                   callback=None) -> TrainedWatchdog:
    """Train the autoencoder to reproduce its input.

    ``snr_db`` (per-record, ``inf`` for noiseless) and
    ``declared_snr_floor_db`` guard against corpora with sub-0 dB AWGN,
    on which thresholds fail to settle.
    """
    if FeatureKind(kind) is not FeatureKind.PSD_DB:
        raise FeatureKindError("watchdog trains on PSD_DB features")
    if declared_snr_floor_db is not None and declared_snr_floor_db < 0:
        raise CorpusRejectedError(f"watchdog corpus declares AWGN down to {declared_snr_floor_db} dB; need >= 0")
    if snr_db is not None and np.any(np.asarray(snr_db, dtype=float) < 0):
        raise CorpusRejectedError("watchdog corpus contains records below 0 dB SNR")
    x = _as_batch(model, features)
    result = fit(model, x, x, epochs, batch_size, seed, optimizer=Adamax(lr=lr), chunk=chunk, callback=callback)
    return TrainedWatchdog(result.model, result.loss_history)


def rmse(x, x_hat) -> np.ndarray | float:
    """Root-mean-square error over the last axis."""
    x, x_hat = np.asarray(x, dtype=float), np.asarray(x_hat, dtype=float)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    out = np.sqrt(np.mean((x - x_hat) ** 2, axis=-1))
    return float(out) if out.ndim == 0 else out


def reconstruct(model: Model, features, batch_size: int = 32) -> np.ndarray:
    x = _as_batch(model, features)
    return model.predict(x, batch_size=batch_size)[:, :, 0]


def reconstruction_rmse(model: Model, features, batch_size: int = 32) -> np.ndarray | float:
    """Per-signal RMSE between PSD features and their reconstruction."""
    single = np.asarray(features).ndim == 1
    x = _as_batch(model, features)[:, :, 0]
    errs = rmse(x, reconstruct(model, x, batch_size))
    return float(errs[0]) if single else errs


@dataclass(frozen=True)
class Region:
    label: str
    rmse_min: float
    rmse_max: float

    def __post_init__(self):
        if not self.rmse_min <= self.rmse_max:
            raise ValueError(f"region {self.label}: min {self.rmse_min} > max {self.rmse_max}")

    def contains(self, value: float) -> bool:
        return self.rmse_min <= value <= self.rmse_max


_EXPECTED_REGIONS = {Design.TWO: 1, Design.THREE: 2, Design.FIVE: 4}


@dataclass
class RegionSet:
    design: Design
    regions: list[Region]
    nfft: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.design = Design(self.design)
        if len(self.regions) != _EXPECTED_REGIONS[self.design]:
            raise ValueError(f"{self.design.value}-region design needs {_EXPECTED_REGIONS[self.design]} intervals")

    def to_dict(self) -> dict:
        return {
            "design": self.design.value,
            "nfft": self.nfft,
            "regions": [{"label": r.label, "min": r.rmse_min, "max": r.rmse_max} for r in self.regions],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RegionSet:
        regions = [Region(r["label"], float(r["min"]), float(r["max"])) for r in d["regions"]]
        return cls(Design(d["design"]), regions, d.get("nfft"), d.get("meta", {}))

    def save(self, path) -> None:
        # json writes floats with repr(), which round-trips doubles exactly
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> RegionSet:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _span(values, label: str) -> Region:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError(f"no calibration RMSEs for {label}")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"non-finite calibration RMSE for {label}")
    return Region(label, float(values.min()), float(values.max()))


def calibrate_regions(per_class: dict, design: Design | str, nfft: int | None = None) -> RegionSet:
    """Min/max RMSE intervals from per-class training reconstruction errors.

    ``per_class`` maps each known class (enum, id, or name) to its list of
    training RMSEs; every class must be present and non-empty.
    """
    design = Design(design)
    lists = {}
    for key, values in per_class.items():
        cls = key if isinstance(key, WaveformClass) else (
            WaveformClass[key] if isinstance(key, str) else WaveformClass(int(key)))
        lists[cls] = list(values)
    for cls in KNOWN_CLASSES:
        if not lists.get(cls):
            raise ValueError(f"empty calibration list for {cls.name}")
    if design is Design.TWO:
        regions = [_span(np.concatenate([lists[c] for c in KNOWN_CLASSES]), "known")]
    elif design is Design.THREE:
        regions = [
            _span(lists[WaveformClass.LFM], "radar"),
            _span(np.concatenate([lists[c] for c in COMM_CLASSES]), "comm"),
        ]
    else:
        regions = [_span(lists[c], c.name) for c in (WaveformClass.SC, WaveformClass.SCFDMA,
                                                     WaveformClass.OFDM, WaveformClass.LFM)]
    return RegionSet(design, regions, nfft)


@dataclass(frozen=True)
class DetectionResult:
    rmse: float
    verdict: Verdict
    matched_region: str | None = None


def detect(value: float, regions: RegionSet) -> DetectionResult:
    """First region (in declaration order) whose closed interval holds ``value``."""
    value = float(value)
    if not math.isnan(value):
        for region in regions.regions:
            if region.contains(value):
                return DetectionResult(value, Verdict.KNOWN, region.label)
    return DetectionResult(value, Verdict.UNKNOWN, None)


def known_mask(values, regions: RegionSet) -> np.ndarray:
    """Vectorised :func:`detect`: True where the verdict is KNOWN."""
    values = np.asarray(values, dtype=float)
    mask = np.zeros(values.shape, dtype=bool)
    for region in regions.regions:
        mask |= (values >= region.rmse_min) & (values <= region.rmse_max)
    return mask
