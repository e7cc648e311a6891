"""Network inputs: magnitude FFT for the classifier, Welch PSD in dB for the watchdog.

Both are min-max normalized per signal, so the result is invariant to a
positive rescaling of the input and every element lies in [0, 1].
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal

from .sigsynth import IQSignal

SUPPORTED_NFFT = (4096, 8192, 16384)
DB_FLOOR = -120.0


class FeatureKind(enum.IntEnum):
    FFT_MAG = 0
    PSD_DB = 1


@dataclass
class FeatureVector:
    values: np.ndarray
    kind: FeatureKind
    nfft: int

    def __post_init__(self):
        if self.values.shape != (self.nfft,):
            raise ValueError(f"feature length {self.values.shape} does not match nfft {self.nfft}")


def _check_nfft(nfft: int) -> None:
    if nfft < 2 or nfft & (nfft - 1):
        raise ValueError(f"nfft must be a power of two >= 2, got {nfft}")


def minmax_normalize(v) -> np.ndarray:
    """Scale to [0, 1]; a constant vector maps to all zeros."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("cannot normalize an empty vector")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def fft_spectrum(sig: IQSignal | np.ndarray, nfft: int) -> np.ndarray:
    """Raw |DFT| of the first ``nfft`` samples, zero padded if short."""
    _check_nfft(nfft)
    x = sig.samples if isinstance(sig, IQSignal) else np.asarray(sig)
    if x.size == 0:
        raise ValueError("empty input")
    return np.abs(np.fft.fft(x, nfft))


def fft_mag(sig: IQSignal | np.ndarray, nfft: int = 4096) -> FeatureVector:
    return FeatureVector(minmax_normalize(fft_spectrum(sig, nfft)), FeatureKind.FFT_MAG, nfft)


def psd_estimate(sig: IQSignal | np.ndarray, nfft: int, method: str = "welch") -> np.ndarray:
    """Two-sided PSD in dB (unnormalized), natural FFT bin order.

    ``method="welch"`` averages Hann-windowed periodograms with 50% overlap;
    ``method="periodogram"`` uses one Hann-windowed segment of the first
    ``nfft`` samples.
    """
    _check_nfft(nfft)
    x = sig.samples if isinstance(sig, IQSignal) else np.asarray(sig)
    if x.size < nfft:
        raise ValueError(f"insufficient samples: need {nfft}, got {x.size}")
    if method == "welch":
        _, pxx = sp_signal.welch(
            x, window="hann", nperseg=nfft, noverlap=nfft // 2, nfft=nfft,
            detrend=False, return_onesided=False, scaling="density", fs=1.0,
        )
    elif method == "periodogram":
        _, pxx = sp_signal.periodogram(
            x[:nfft], window="hann", nfft=nfft, detrend=False,
            return_onesided=False, scaling="density", fs=1.0,
        )
    else:
        raise ValueError(f"unknown PSD method {method!r}")
    return np.maximum(10 * np.log10(np.maximum(pxx, 1e-300)), DB_FLOOR)


def psd_db(sig: IQSignal | np.ndarray, nfft: int = 4096, method: str = "welch") -> FeatureVector:
    return FeatureVector(minmax_normalize(psd_estimate(sig, nfft, method)), FeatureKind.PSD_DB, nfft)


def extract(sig: IQSignal, kind: FeatureKind, nfft: int) -> FeatureVector:
    if FeatureKind(kind) is FeatureKind.FFT_MAG:
        return fft_mag(sig, nfft)
    return psd_db(sig, nfft)
