"""Clean baseband waveform synthesis.

Four known classes (SC, SC-FDMA, OFDM, LFM) plus four unknown kinds that
only ever appear in test corpora (AM, FM, BLE, white noise). Every
generator is a pure function of its :class:`SignalSpec`, seed included,
and returns a unit mean-power :class:`IQSignal`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

DEFAULT_FS = 100e6
BLE_FS = 125e6
DESK_SAMPLES = 16384
PAPER_SAMPLES = 100_000

# SC pulse shaping
RRC_ROLLOFF = 0.5
RRC_SPAN = 12

# OFDM / SC-FDMA numerology
OFDM_NFFT = 256
OFDM_ACTIVE = 128
OFDM_CP = 32

LFM_CHIRP_LEN = 2048

AM_INDEX = 0.8
AM_MESSAGE_BW = 20e6
FM_DEVIATION = 20e6
FM_MESSAGE_BW = 5e6
BLE_SYMBOL_RATE = 1e6
BLE_BT = 0.5
BLE_MOD_INDEX = 0.5
BLE_CHANNELS = 40
BLE_CHANNEL_SPACING = 2e6
BLE_HOP_PERIOD = 625e-6


class WaveformClass(enum.IntEnum):
    """Known waveform classes, in one-hot label order."""

    SC = 0
    SCFDMA = 1
    OFDM = 2
    LFM = 3


class UnknownKind(enum.IntEnum):
    """Signals never seen in training. Ids continue after the known classes."""

    AM = 4
    FM = 5
    BLE = 6
    WHITE_NOISE = 7


KNOWN_CLASSES = tuple(WaveformClass)
UNKNOWN_KINDS = tuple(UnknownKind)
ALL_CLASSES = KNOWN_CLASSES + UNKNOWN_KINDS
COMM_CLASSES = (WaveformClass.SC, WaveformClass.SCFDMA, WaveformClass.OFDM)


def class_from_id(class_id: int) -> WaveformClass | UnknownKind:
    if class_id < len(WaveformClass):
        return WaveformClass(class_id)
    return UnknownKind(class_id)


def class_from_name(name: str) -> WaveformClass | UnknownKind:
    key = name.upper().replace("-", "").replace(" ", "_")
    if key in WaveformClass.__members__:
        return WaveformClass[key]
    if key in UnknownKind.__members__:
        return UnknownKind[key]
    raise ValueError(f"unknown waveform class {name!r}")


class ModulationScheme(enum.IntEnum):
    BPSK = 0
    QPSK = 1
    PSK16 = 2
    PSK64 = 3
    QAM4 = 4
    QAM16 = 5
    QAM64 = 6
    QAM256 = 7


def _psk(order: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(order) / order)


def _qam(order: int) -> np.ndarray:
    side = int(round(np.sqrt(order)))
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    points = (levels[:, None] + 1j * levels[None, :]).ravel()
    return points / np.sqrt(np.mean(np.abs(points) ** 2))


_CONSTELLATIONS = {
    ModulationScheme.BPSK: _psk(2),
    ModulationScheme.QPSK: _psk(4),
    ModulationScheme.PSK16: _psk(16),
    ModulationScheme.PSK64: _psk(64),
    ModulationScheme.QAM4: _qam(4),
    ModulationScheme.QAM16: _qam(16),
    ModulationScheme.QAM64: _qam(64),
    ModulationScheme.QAM256: _qam(256),
}


def constellation(modulation: ModulationScheme) -> np.ndarray:
    """Unit average-energy constellation points for ``modulation``."""
    return _CONSTELLATIONS[ModulationScheme(modulation)].copy()


@dataclass(frozen=True)
class SignalSpec:
    """What to synthesize.

    ``modulation`` is only consulted by the communication classes.
    ``duration_s`` defaults to the desk-scale capture of 16384 samples at
    100 MHz; use :func:`paper_spec` for the 1 ms captures.
    """

    waveform_class: WaveformClass | UnknownKind
    modulation: ModulationScheme | None = None
    sample_rate_hz: float = DEFAULT_FS
    duration_s: float = DESK_SAMPLES / DEFAULT_FS
    bandwidth_hz: float = 50e6
    seed: int = 0

    def __post_init__(self):
        n = self.duration_s * self.sample_rate_hz
        if round(n) < 1 or abs(n - round(n)) > 1e-6:
            raise ValueError(f"duration x sample rate must be a positive integer, got {n}")
        if self.bandwidth_hz > self.sample_rate_hz / 2 + 1e-9:
            raise ValueError("bandwidth exceeds half the sample rate")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))


def desk_spec(waveform_class, modulation=None, seed=0, n_samples=DESK_SAMPLES) -> SignalSpec:
    """Desk-scale spec; BLE gets its own rate and 2 MHz hop bandwidth."""
    waveform_class = _as_class(waveform_class)
    if waveform_class is UnknownKind.BLE:
        return SignalSpec(waveform_class, None, BLE_FS, n_samples / BLE_FS, 2e6, seed)
    return SignalSpec(waveform_class, modulation, DEFAULT_FS, n_samples / DEFAULT_FS, 50e6, seed)


def paper_spec(waveform_class, modulation=None, seed=0) -> SignalSpec:
    """1 ms at 100 MHz, or 10 ms at 125 MHz for BLE."""
    waveform_class = _as_class(waveform_class)
    if waveform_class is UnknownKind.BLE:
        return SignalSpec(waveform_class, None, BLE_FS, 10e-3, 2e6, seed)
    return SignalSpec(waveform_class, modulation, DEFAULT_FS, 1e-3, 50e6, seed)


@dataclass
class IQSignal:
    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise ValueError("IQSignal needs a non-empty 1-D sample array")

    def __len__(self):
        return self.samples.size

    @property
    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    def with_samples(self, samples: np.ndarray) -> IQSignal:
        return IQSignal(samples, self.sample_rate_hz)


def _as_class(value):
    if isinstance(value, (WaveformClass, UnknownKind)):
        return value
    if isinstance(value, str):
        return class_from_name(value)
    return class_from_id(int(value))


def _unit_power(x: np.ndarray) -> np.ndarray:
    p = np.mean(np.abs(x) ** 2)
    return x / np.sqrt(p) if p > 0 else x


def gen_symbols(modulation: ModulationScheme, count: int, seed) -> np.ndarray:
    """Uniform i.i.d. draws from the unit-energy constellation."""
    if count < 1:
        raise ValueError("count must be >= 1")
    points = _CONSTELLATIONS[ModulationScheme(modulation)]
    rng = np.random.default_rng(seed)
    return points[rng.integers(0, points.size, count)]


def rrc_taps(rolloff: float, sps: int, span: int) -> np.ndarray:
    """Root-raised-cosine impulse response, unit energy, ``span * sps + 1`` taps."""
    t = np.arange(-span * sps / 2, span * sps / 2 + 1) / sps
    b = rolloff
    h = np.empty_like(t)
    for i, ti in enumerate(t):
        if np.isclose(ti, 0.0):
            h[i] = 1.0 + b * (4 / np.pi - 1)
        elif b > 0 and np.isclose(abs(ti), 1 / (4 * b)):
            h[i] = (b / np.sqrt(2)) * (
                (1 + 2 / np.pi) * np.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
            )
        else:
            num = np.sin(np.pi * ti * (1 - b)) + 4 * b * ti * np.cos(np.pi * ti * (1 + b))
            den = np.pi * ti * (1 - (4 * b * ti) ** 2)
            h[i] = num / den
    return h / np.sqrt(np.sum(h**2))


def gen_sc(spec: SignalSpec) -> IQSignal:
    """RRC-shaped single carrier; 3 samples/symbol at the default rate."""
    _expect(spec, WaveformClass.SC)
    n = spec.n_samples
    symbol_rate = spec.bandwidth_hz / (1 + RRC_ROLLOFF)
    sps = max(2, int(round(spec.sample_rate_hz / symbol_rate)))
    n_sym = -(-n // sps) + RRC_SPAN
    symbols = gen_symbols(_modulation(spec), n_sym, spec.seed)
    up = np.zeros(n_sym * sps, dtype=complex)
    up[::sps] = symbols
    shaped = np.convolve(up, rrc_taps(RRC_ROLLOFF, sps, RRC_SPAN))
    # skip the filter transient so every kept sample sees a full pulse span
    start = RRC_SPAN * sps
    return IQSignal(_unit_power(shaped[start : start + n]), spec.sample_rate_hz)


def _active_bins() -> np.ndarray:
    # centred block of subcarriers: -64 .. 63 in FFT index order
    return np.arange(-OFDM_ACTIVE // 2, OFDM_ACTIVE // 2) % OFDM_NFFT


def _multicarrier(spec: SignalSpec, precode: bool, half_shift: bool = False) -> np.ndarray:
    n = spec.n_samples
    sym_len = OFDM_NFFT + OFDM_CP
    n_ofdm = -(-n // sym_len)
    data = gen_symbols(_modulation(spec), n_ofdm * OFDM_ACTIVE, spec.seed).reshape(n_ofdm, OFDM_ACTIVE)
    if precode:
        data = np.fft.fft(data, axis=1) / np.sqrt(OFDM_ACTIVE)
    grid = np.zeros((n_ofdm, OFDM_NFFT), dtype=complex)
    grid[:, _active_bins()] = data
    body = np.fft.ifft(grid, axis=1) * (OFDM_NFFT / np.sqrt(OFDM_ACTIVE))
    frames = np.concatenate([body[:, -OFDM_CP:], body], axis=1)
    if half_shift:
        # LTE uplink convention: shift by half a subcarrier, time index restarting at -CP per symbol
        frames = frames * np.exp(1j * np.pi * np.arange(-OFDM_CP, OFDM_NFFT) / OFDM_NFFT)
    return _unit_power(frames.ravel()[:n])


def gen_ofdm(spec: SignalSpec) -> IQSignal:
    """256-point OFDM, 128 centred active subcarriers, 32-sample cyclic prefix."""
    _expect(spec, WaveformClass.OFDM)
    return IQSignal(_multicarrier(spec, precode=False), spec.sample_rate_hz)


def gen_scfdma(spec: SignalSpec, precode: bool = True, half_shift: bool = True) -> IQSignal:
    """OFDM grid with 128-point DFT spreading and localized mapping.

    As on the LTE uplink, subcarriers sit half a spacing off the OFDM
    grid. Without that offset the two classes have statistically identical
    magnitude spectra. ``precode=False, half_shift=False`` reduces this to
    :func:`gen_ofdm` exactly.
    """
    _expect(spec, WaveformClass.SCFDMA)
    return IQSignal(_multicarrier(spec, precode, half_shift), spec.sample_rate_hz)


def gen_lfm(spec: SignalSpec) -> IQSignal:
    """Continuous train of 2048-sample up-chirps sweeping -B/2 to +B/2.

    The seed only sets the starting phase of the carrier.
    """
    _expect(spec, WaveformClass.LFM)
    fs, bw = spec.sample_rate_hz, spec.bandwidth_hz
    t = np.arange(LFM_CHIRP_LEN) / fs
    period = LFM_CHIRP_LEN / fs
    phase = 2 * np.pi * (-bw / 2 * t + bw / (2 * period) * t**2)
    theta0 = np.random.default_rng(spec.seed).uniform(-np.pi, np.pi)
    chirp = np.exp(1j * (phase + theta0))
    reps = -(-spec.n_samples // LFM_CHIRP_LEN)
    return IQSignal(np.tile(chirp, reps)[: spec.n_samples], fs)


def _bandlimited_noise(rng, n: int, fs: float, bw: float) -> np.ndarray:
    """Real Gaussian noise with a brick-wall spectrum up to ``bw`` Hz."""
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1 / fs)
    spectrum[freqs > bw] = 0
    m = np.fft.irfft(spectrum, n)
    return m / np.max(np.abs(m))


def _gaussian_pulse(bt: float, sps: int, span: int = 3) -> np.ndarray:
    t = np.arange(-span * sps / 2, span * sps / 2 + 1) / sps
    alpha = np.sqrt(np.log(2) / 2) / bt
    g = np.sqrt(np.pi) / alpha * np.exp(-((np.pi * t / alpha) ** 2))
    return g / np.sum(g)


def ble_hop_channels(spec: SignalSpec) -> np.ndarray:
    """Channel index (0..39) used in each 625 us hop slot of a BLE capture."""
    n_hops = int(np.ceil(spec.duration_s / BLE_HOP_PERIOD - 1e-9))
    rng = np.random.default_rng([spec.seed, 1])
    return rng.integers(0, BLE_CHANNELS, n_hops)


def ble_channel_offsets() -> np.ndarray:
    """Baseband centre frequency of each of the 40 2-MHz channels."""
    return (np.arange(BLE_CHANNELS) - (BLE_CHANNELS - 1) / 2) * BLE_CHANNEL_SPACING


def gen_unknown(kind: UnknownKind, spec: SignalSpec) -> IQSignal:
    kind = UnknownKind(kind)
    n, fs = spec.n_samples, spec.sample_rate_hz
    rng = np.random.default_rng(spec.seed)
    if kind is UnknownKind.WHITE_NOISE:
        x = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
        return IQSignal(x, fs)
    if kind is UnknownKind.AM:
        m = _bandlimited_noise(rng, n, fs, AM_MESSAGE_BW)
        return IQSignal(_unit_power((1 + AM_INDEX * m).astype(complex)), fs)
    if kind is UnknownKind.FM:
        m = _bandlimited_noise(rng, n, fs, FM_MESSAGE_BW)
        phase = 2 * np.pi * FM_DEVIATION * np.cumsum(m) / fs
        return IQSignal(np.exp(1j * phase), fs)
    # BLE: GFSK at 1 Msym/s, hopping every 625 us
    sps = int(round(fs / BLE_SYMBOL_RATE))
    n_sym = -(-n // sps) + 4
    bits = rng.integers(0, 2, n_sym) * 2 - 1
    up = np.repeat(bits.astype(float), sps)
    freq_dev = BLE_MOD_INDEX * BLE_SYMBOL_RATE / 2
    inst = np.convolve(up, _gaussian_pulse(BLE_BT, sps), mode="same")[:n] * freq_dev
    hop_len = int(round(BLE_HOP_PERIOD * fs))
    centres = ble_channel_offsets()[ble_hop_channels(spec)]
    inst = inst + np.repeat(centres, hop_len)[:n]
    phase = 2 * np.pi * np.cumsum(inst) / fs
    return IQSignal(np.exp(1j * phase), fs)


def _expect(spec: SignalSpec, cls: WaveformClass) -> None:
    if spec.waveform_class is not cls:
        raise ValueError(f"spec is for {spec.waveform_class.name}, expected {cls.name}")


def _modulation(spec: SignalSpec) -> ModulationScheme:
    if spec.modulation is None:
        raise ValueError(f"{spec.waveform_class.name} needs a modulation scheme")
    return ModulationScheme(spec.modulation)


_KNOWN_GENERATORS = {
    WaveformClass.SC: gen_sc,
    WaveformClass.SCFDMA: gen_scfdma,
    WaveformClass.OFDM: gen_ofdm,
    WaveformClass.LFM: gen_lfm,
}


def synthesize(spec: SignalSpec) -> IQSignal:
    """Dispatch on ``spec.waveform_class``."""
    cls = spec.waveform_class
    if isinstance(cls, UnknownKind):
        return gen_unknown(cls, spec)
    return _KNOWN_GENERATORS[cls](spec)


def reseed(spec: SignalSpec, seed: int) -> SignalSpec:
    return replace(spec, seed=seed)
