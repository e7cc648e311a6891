"""Channel and receiver impairments.

``impair`` applies them in a fixed order: fading, carrier frequency
offset, phase offset, IQ imbalance, then AWGN. SNR is referenced to the
mean power of the signal reaching the noise stage.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .sigsynth import IQSignal

FADING_DELAYS = (0, 5, 12)
FADING_POWERS_DB = (0.0, -3.0, -6.0)
RICIAN_K_DB = 4.0


class Fading(enum.IntEnum):
    NONE = 0
    RAYLEIGH = 1
    RICIAN = 2


@dataclass(frozen=True)
class ImpairmentConfig:
    snr_db: float = math.inf
    phase_offset_rad: float = 0.0
    freq_offset_hz: float = 0.0
    iq_imbalance_db: float = 0.0
    fading: Fading = Fading.NONE
    seed: int = 0

    def __post_init__(self):
        if not -math.pi - 1e-12 <= self.phase_offset_rad <= math.pi + 1e-12:
            raise ValueError("phase offset must lie in [-pi, pi]")
        if not -5000 <= self.freq_offset_hz <= 5000:
            raise ValueError("frequency offset must lie in [-5000, 5000] Hz")
        if not 0 <= self.iq_imbalance_db <= 3:
            raise ValueError("IQ imbalance must lie in [0, 3] dB")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError("snr_db must be finite or +inf")


def _noise(rng: np.random.Generator, n: int) -> np.ndarray:
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)


def add_awgn(sig: IQSignal, snr_db: float, seed) -> IQSignal:
    """Circular complex Gaussian noise at ``snr_db`` below the signal's mean power."""
    if snr_db == math.inf:
        return sig.with_samples(sig.samples.copy())
    p = sig.power
    if not p > 0:
        raise ValueError("signal has no power to reference the SNR to")
    sigma2 = p / 10 ** (snr_db / 10)
    rng = np.random.default_rng(seed)
    return sig.with_samples(sig.samples + np.sqrt(sigma2) * _noise(rng, len(sig)))


def apply_cfo(sig: IQSignal, freq_offset_hz: float) -> IQSignal:
    if abs(freq_offset_hz) >= sig.sample_rate_hz / 2:
        raise ValueError("frequency offset beyond Nyquist")
    k = np.arange(len(sig))
    rot = np.exp(2j * np.pi * freq_offset_hz * k / sig.sample_rate_hz)
    return sig.with_samples(sig.samples * rot)


def apply_phase(sig: IQSignal, phase_offset_rad: float) -> IQSignal:
    return sig.with_samples(sig.samples * np.exp(1j * phase_offset_rad))


def apply_iq_imbalance(sig: IQSignal, imbalance_db: float) -> IQSignal:
    """Amplitude-only imbalance: the Q rail is scaled by ``10**(dB/20)``."""
    if imbalance_db < 0:
        raise ValueError("imbalance must be >= 0 dB")
    g = 10 ** (imbalance_db / 20)
    x = sig.samples
    return sig.with_samples(x.real + 1j * g * x.imag)


def fading_taps(kind: Fading, seed) -> np.ndarray:
    """Three-tap block-fading impulse response, unit total power."""
    kind = Fading(kind)
    if kind is Fading.NONE:
        raise ValueError("fading kind NONE has no taps")
    rng = np.random.default_rng(seed)
    powers = 10 ** (np.asarray(FADING_POWERS_DB) / 10)
    scatter = _noise(rng, len(powers))
    if kind is Fading.RICIAN:
        k = 10 ** (RICIAN_K_DB / 10)
        los = np.exp(1j * rng.uniform(-np.pi, np.pi))
        scatter[0] = np.sqrt(k / (k + 1)) * los + np.sqrt(1 / (k + 1)) * scatter[0]
    taps = np.sqrt(powers) * scatter
    h = np.zeros(FADING_DELAYS[-1] + 1, dtype=complex)
    h[list(FADING_DELAYS)] = taps
    return h / np.sqrt(np.sum(np.abs(h) ** 2))


def apply_fading(sig: IQSignal, kind: Fading, seed) -> IQSignal:
    h = fading_taps(kind, seed)
    return sig.with_samples(np.convolve(sig.samples, h)[: len(sig)])


def impair(sig: IQSignal, cfg: ImpairmentConfig) -> IQSignal:
    """Apply every impairment in ``cfg``; neutral settings are exact identities."""
    out = sig
    if cfg.fading is not Fading.NONE:
        # noise draws from cfg.seed itself, so the taps need a separate stream
        out = apply_fading(out, cfg.fading, [cfg.seed, 1])
    if cfg.freq_offset_hz:
        out = apply_cfo(out, cfg.freq_offset_hz)
    if cfg.phase_offset_rad:
        out = apply_phase(out, cfg.phase_offset_rad)
    if cfg.iq_imbalance_db:
        out = apply_iq_imbalance(out, cfg.iq_imbalance_db)
    return add_awgn(out, cfg.snr_db, cfg.seed)
