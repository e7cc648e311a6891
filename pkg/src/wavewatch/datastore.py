"""Corpus generation from declarative manifests, plus the binary corpus format.

A manifest lists per-class signal counts and one or more *corpora*. Every
signal index is synthesized once; each corpus then applies its own
impairment ranges and feature extraction. Impairment parameters are drawn
as unit uniforms from a per-signal stream and mapped onto each corpus's
ranges, so two corpora that differ only in their SNR range see the same
phase, CFO, IQ imbalance, and fading draws.

Corpus file layout (little-endian)::

    b"SWF1" | version u16 | record count u32 | feature dim u32 | feature kind u8
    records: f32[dim] features | class u8 | modulation u8 (255 n/a)
             | snr i8 (-128 = no noise) | impairment flags u8
    CRC32 u32 over every preceding byte
"""

from __future__ import annotations

import json
import logging
import math
import struct
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .channel import Fading, ImpairmentConfig, impair
from .features import FeatureKind, extract
from .sigsynth import (
    ALL_CLASSES, COMM_CLASSES, DESK_SAMPLES, KNOWN_CLASSES, PAPER_SAMPLES, IQSignal, ModulationScheme,
    UnknownKind, WaveformClass, class_from_name, desk_spec, synthesize,
)

log = logging.getLogger(__name__)

MAGIC = b"SWF1"
VERSION = 1
MANIFEST_VERSION = 1
HEADER = struct.Struct("<4sHIIB")
NO_MODULATION = 255
SNR_INF = -128

FLAG_AWGN = 1
FLAG_CFO = 2
FLAG_PHASE = 4
FLAG_IQ = 8
FLAG_RAYLEIGH = 16
FLAG_RICIAN = 32

PAPER_TRAIN_PER_CLASS = 10_000
PAPER_TEST_PER_CLASS = 400
DESK_DIVISOR = 12.5


class CorpusFormatError(ValueError):
    pass


class NotACorpusError(CorpusFormatError):
    pass


class CorpusVersionError(CorpusFormatError):
    pass


class CorpusChecksumError(CorpusFormatError):
    pass


class CorruptHeaderError(CorpusFormatError):
    pass


class ManifestError(ValueError):
    pass


def record_dtype(dim: int) -> np.dtype:
    return np.dtype([("x", "<f4", (dim,)), ("cls", "u1"), ("mod", "u1"), ("snr", "i1"), ("flags", "u1")])


# --- manifests ---------------------------------------------------------------

def _range(value):
    """None (off), a fixed number, or a [lo, hi] list."""
    if value is None:
        return None
    if isinstance(value, (int, float)):
        return float(value)
    lo, hi = (float(v) for v in value)
    if lo > hi:
        raise ManifestError(f"range [{lo}, {hi}] is reversed")
    return [lo, hi]


@dataclass
class ImpairmentRanges:
    """Per-corpus impairment distributions; draws are independent and uniform."""

    snr_db: list | float | None = None
    snr_step_db: float | None = None
    phase_offset_rad: list | float | None = None
    freq_offset_hz: list | float | None = None
    iq_imbalance_db: list | float | None = None
    fading: list[str] = field(default_factory=list)

    def __post_init__(self):
        for name in ("snr_db", "phase_offset_rad", "freq_offset_hz", "iq_imbalance_db"):
            setattr(self, name, _range(getattr(self, name)))
        self.fading = [Fading[f.upper()].name.lower() for f in self.fading]

    @classmethod
    def all_impairments(cls, snr_db, snr_step_db=None) -> ImpairmentRanges:
        return cls(snr_db, snr_step_db, [-math.pi, math.pi], [-5000.0, 5000.0], [0.0, 3.0],
                   ["none", "rayleigh", "rician"])

    @classmethod
    def awgn_only(cls, snr_db, snr_step_db=None) -> ImpairmentRanges:
        return cls(snr_db, snr_step_db)

    @property
    def snr_floor(self) -> float | None:
        if self.snr_db is None:
            return None
        return self.snr_db[0] if isinstance(self.snr_db, list) else self.snr_db

    def snr_values(self) -> np.ndarray | None:
        """The discrete SNR grid, when ``snr_step_db`` is set."""
        if self.snr_step_db is None or not isinstance(self.snr_db, list):
            return None
        lo, hi = self.snr_db
        return np.arange(lo, hi + self.snr_step_db / 2, self.snr_step_db)


@dataclass
class CorpusSpec:
    name: str
    feature: str
    nfft: int
    impairments: ImpairmentRanges

    def __post_init__(self):
        self.feature = FeatureKind[self.feature.upper()].name.lower()
        if isinstance(self.impairments, dict):
            self.impairments = ImpairmentRanges(**self.impairments)

    @property
    def kind(self) -> FeatureKind:
        return FeatureKind[self.feature.upper()]


@dataclass
class DatasetManifest:
    profile: str
    split: str
    master_seed: int
    n_samples: int
    class_counts: dict[str, int]
    corpora: list[CorpusSpec]
    modulations: list[str] = field(default_factory=lambda: [m.name for m in ModulationScheme])
    divisor: float = 1.0
    format_version: int = MANIFEST_VERSION

    def __post_init__(self):
        self.corpora = [c if isinstance(c, CorpusSpec) else CorpusSpec(**c) for c in self.corpora]
        self.validate()

    def validate(self) -> None:
        if self.format_version != MANIFEST_VERSION:
            raise ManifestError(f"unsupported manifest version {self.format_version}")
        if not self.corpora:
            raise ManifestError("manifest has no corpora")
        if self.n_samples < 1:
            raise ManifestError("n_samples must be >= 1")
        names = [c.name for c in self.corpora]
        if len(set(names)) != len(names):
            raise ManifestError("corpus names must be unique")
        for name, count in self.class_counts.items():
            class_from_name(name)
            if int(count) != count or count < 0:
                raise ManifestError(f"invalid count {count} for {name}")
        for mod in self.modulations:
            ModulationScheme[mod]
        for c in self.corpora:
            if c.nfft > self.n_samples and c.kind is FeatureKind.PSD_DB:
                raise ManifestError(f"{c.name}: PSD nfft {c.nfft} exceeds {self.n_samples} samples")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> DatasetManifest:
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> DatasetManifest:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (TypeError, KeyError) as exc:
            raise ManifestError(f"malformed manifest {path}: {exc}") from None

    @property
    def total(self) -> int:
        return sum(self.class_counts.values())

    def corpus(self, name: str) -> CorpusSpec:
        for c in self.corpora:
            if c.name == name:
                return c
        raise KeyError(name)


@dataclass(frozen=True)
class SignalPlan:
    index: int
    waveform_class: WaveformClass | UnknownKind
    modulation: ModulationScheme | None


def signal_plan(manifest: DatasetManifest) -> list[SignalPlan]:
    """Signals ordered by class id; comm classes cycle through the modulation list."""
    mods = [ModulationScheme[m] for m in manifest.modulations]
    counts = {class_from_name(k): int(v) for k, v in manifest.class_counts.items()}
    plan = []
    for cls in ALL_CLASSES:
        for j in range(counts.get(cls, 0)):
            mod = mods[j % len(mods)] if cls in COMM_CLASSES else None
            plan.append(SignalPlan(len(plan), cls, mod))
    return plan


def _per_class(total: int, divisor: float) -> int:
    n = total / divisor
    if abs(n - round(n)) > 1e-9:
        raise ManifestError(f"{total}/{divisor} is not a whole signal count")
    return int(round(n))


def default_manifest(profile: str = "desk", split: str = "train", seed: int = 0) -> DatasetManifest:
    """Built-in corpora.

    Training: a classifier corpus (|FFT| 4096, all impairments, -20..20 dB),
    watchdog corpora at each PSD size with all impairments at 0..20 dB, and
    an AWGN-only 0..20 dB watchdog corpus at 4096. Test: all eight classes on
    a 5 dB SNR grid, classifier corpora with all impairments and AWGN only,
    and detector corpora (-10..20 dB) in both flavours at each PSD size.

    The desk profile shortens captures to 16384 samples and divides the
    training counts by 12.5 (800 per class); the test split keeps 400 per
    class.
    """
    profile = profile.lower()
    if profile not in ("paper", "desk"):
        raise ManifestError(f"unknown profile {profile!r}")
    n_samples = PAPER_SAMPLES if profile == "paper" else DESK_SAMPLES
    if split == "train":
        divisor = DESK_DIVISOR if profile == "desk" else 1.0
        per = _per_class(PAPER_TRAIN_PER_CLASS, divisor)
        counts = {c.name: per for c in KNOWN_CLASSES}
        corpora = [CorpusSpec("classifier", "fft_mag", 4096, ImpairmentRanges.all_impairments([-20.0, 20.0]))]
        corpora += [CorpusSpec(f"watchdog_{n}", "psd_db", n, ImpairmentRanges.all_impairments([0.0, 20.0]))
                    for n in (4096, 8192, 16384)]
        corpora.append(CorpusSpec("watchdog_awgn_4096", "psd_db", 4096, ImpairmentRanges.awgn_only([0.0, 20.0])))
    elif split == "test":
        divisor = 1.0
        counts = {c.name: PAPER_TEST_PER_CLASS for c in ALL_CLASSES}
        corpora = [
            CorpusSpec("classifier", "fft_mag", 4096, ImpairmentRanges.all_impairments([-20.0, 20.0], 5.0)),
            CorpusSpec("classifier_awgn", "fft_mag", 4096, ImpairmentRanges.awgn_only([-20.0, 20.0], 5.0)),
        ]
        for n in (4096, 8192, 16384):
            corpora.append(CorpusSpec(f"detector_awgn_{n}", "psd_db", n, ImpairmentRanges.awgn_only([-10.0, 20.0], 5.0)))
            corpora.append(CorpusSpec(f"detector_full_{n}", "psd_db", n,
                                      ImpairmentRanges.all_impairments([-10.0, 20.0], 5.0)))
    else:
        raise ManifestError(f"unknown split {split!r}")
    return DatasetManifest(profile, split, int(seed), n_samples, counts, corpora, divisor=divisor)


def ablation_manifest(axis: str, values, snr_db=(-20.0, 20.0), snr_step_db: float = 5.0,
                      per_class: int = 100, seed: int = 0, n_samples: int = DESK_SAMPLES) -> DatasetManifest:
    """One classifier corpus per value of a single impairment axis, AWGN on a grid.

    ``axis`` is ``cfo``, ``phase``, or ``iq``. Corpus ``baseline`` has AWGN
    only, with the same signal and noise draws.
    """
    field_name = {"cfo": "freq_offset_hz", "phase": "phase_offset_rad", "iq": "iq_imbalance_db"}.get(axis.lower())
    if field_name is None:
        raise ManifestError(f"ablation axis must be cfo, phase or iq, got {axis!r}")
    corpora = [CorpusSpec("baseline", "fft_mag", 4096, ImpairmentRanges.awgn_only(list(snr_db), snr_step_db))]
    for v in values:
        imp = ImpairmentRanges.awgn_only(list(snr_db), snr_step_db)
        setattr(imp, field_name, float(v))
        corpora.append(CorpusSpec(f"{axis.lower()}_{float(v):g}", "fft_mag", 4096, imp))
    counts = {c.name: per_class for c in KNOWN_CLASSES}
    return DatasetManifest("custom", "test", seed, n_samples, counts, corpora)


# --- generation --------------------------------------------------------------

_SPLIT_STREAM = {"train": 0, "test": 1}


def signal_seeds(master_seed: int, index: int, split: str = "train") -> tuple[int, np.random.Generator, int]:
    """Synthesis seed, impairment-parameter stream, and channel seed for one signal.

    The split is mixed in so train and test corpora built from the same
    master seed never share signals.
    """
    entropy = [int(master_seed), int(index), _SPLIT_STREAM.get(split, 0)]
    synth, params, chan = np.random.SeedSequence(entropy).generate_state(3, dtype=np.uint64)
    return int(synth), np.random.default_rng(int(params)), int(chan)


def _map(spec, u: float) -> float:
    if spec is None:
        return 0.0
    if isinstance(spec, float):
        return spec
    lo, hi = spec
    return lo + u * (hi - lo)


def impairment_config(ranges: ImpairmentRanges, draws: np.ndarray, channel_seed: int) -> ImpairmentConfig:
    """Map six unit uniforms onto ``ranges``: snr, phase, cfo, iq, fading choice, spare."""
    grid = ranges.snr_values()
    if ranges.snr_db is None:
        snr = math.inf
    elif grid is not None:
        snr = float(grid[min(int(draws[0] * len(grid)), len(grid) - 1)])
    else:
        snr = _map(ranges.snr_db, draws[0])
    fading = Fading.NONE
    if ranges.fading:
        choice = ranges.fading[min(int(draws[4] * len(ranges.fading)), len(ranges.fading) - 1)]
        fading = Fading[choice.upper()]
    return ImpairmentConfig(
        snr_db=snr,
        phase_offset_rad=_map(ranges.phase_offset_rad, draws[1]),
        freq_offset_hz=_map(ranges.freq_offset_hz, draws[2]),
        iq_imbalance_db=_map(ranges.iq_imbalance_db, draws[3]),
        fading=fading,
        seed=channel_seed,
    )


def impairment_flags(cfg: ImpairmentConfig) -> int:
    flags = 0
    if cfg.snr_db != math.inf:
        flags |= FLAG_AWGN
    if cfg.freq_offset_hz:
        flags |= FLAG_CFO
    if cfg.phase_offset_rad:
        flags |= FLAG_PHASE
    if cfg.iq_imbalance_db:
        flags |= FLAG_IQ
    if cfg.fading is Fading.RAYLEIGH:
        flags |= FLAG_RAYLEIGH
    if cfg.fading is Fading.RICIAN:
        flags |= FLAG_RICIAN
    return flags


def quantize_snr(snr_db: float) -> int:
    if snr_db == math.inf:
        return SNR_INF
    return int(np.clip(np.round(snr_db), -127, 127))


def clean_signal(manifest: DatasetManifest, plan: SignalPlan) -> IQSignal:
    synth_seed, _, _ = signal_seeds(manifest.master_seed, plan.index, manifest.split)
    spec = desk_spec(plan.waveform_class, plan.modulation, seed=synth_seed, n_samples=manifest.n_samples)
    return synthesize(spec)


def _records_for_signal(manifest: DatasetManifest, plan: SignalPlan) -> list[tuple]:
    sig = clean_signal(manifest, plan)
    _, param_rng, chan_seed = signal_seeds(manifest.master_seed, plan.index, manifest.split)
    draws = param_rng.random(6)
    mod_id = NO_MODULATION if plan.modulation is None else int(plan.modulation)
    impaired = {}
    out = []
    for corpus in manifest.corpora:
        cfg = impairment_config(corpus.impairments, draws, chan_seed)
        if cfg not in impaired:
            impaired[cfg] = impair(sig, cfg)
        feat = extract(impaired[cfg], corpus.kind, corpus.nfft)
        out.append((feat.values.astype("<f4"), int(plan.waveform_class), mod_id,
                    quantize_snr(cfg.snr_db), impairment_flags(cfg)))
    return out


def _worker(args):
    manifest_dict, plan = args
    return _records_for_signal(DatasetManifest.from_dict(manifest_dict), plan)


class _CorpusWriter:
    def __init__(self, path: Path, count: int, dim: int, kind: FeatureKind):
        self.fh = open(path, "wb")
        self.dtype = record_dtype(dim)
        self.crc = 0
        self.remaining = count
        self._write(HEADER.pack(MAGIC, VERSION, count, dim, int(kind)))

    def _write(self, data: bytes):
        self.crc = zlib.crc32(data, self.crc)
        self.fh.write(data)

    def append(self, rec: tuple):
        row = np.zeros(1, dtype=self.dtype)
        row["x"], row["cls"], row["mod"], row["snr"], row["flags"] = rec
        self._write(row.tobytes())
        self.remaining -= 1

    def close(self):
        if self.remaining != 0:
            raise RuntimeError(f"corpus writer closed with {self.remaining} records missing")
        self.fh.write(struct.pack("<I", self.crc & 0xFFFFFFFF))
        self.fh.close()


def generate_corpus(manifest: DatasetManifest, out_dir, workers: int = 1, progress=None) -> dict[str, Path]:
    """Write one ``<name>.swf`` per corpus plus ``manifest.json`` into ``out_dir``.

    Output bytes depend only on the manifest; ``workers > 1`` uses a process
    pool but records are still written in signal-index order.
    """
    manifest.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    plan = signal_plan(manifest)
    if not plan:
        raise ManifestError("manifest describes zero signals")
    paths = {c.name: out_dir / f"{c.name}.swf" for c in manifest.corpora}
    writers = [_CorpusWriter(paths[c.name], len(plan), c.nfft, c.kind) for c in manifest.corpora]
    try:
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                args = ((manifest.to_dict(), p) for p in plan)
                results = pool.map(_worker, args, chunksize=16)
                for i, recs in enumerate(results):
                    for w, rec in zip(writers, recs):
                        w.append(rec)
                    if progress:
                        progress(i + 1, len(plan))
        else:
            for i, p in enumerate(plan):
                for w, rec in zip(writers, _records_for_signal(manifest, p)):
                    w.append(rec)
                if progress:
                    progress(i + 1, len(plan))
    finally:
        for w in writers:
            if w.remaining == 0:
                w.close()
            else:
                w.fh.close()
    manifest.save(out_dir / "manifest.json")
    return paths


# --- loading -----------------------------------------------------------------

@dataclass
class Corpus:
    name: str
    kind: FeatureKind
    nfft: int
    features: np.ndarray
    class_ids: np.ndarray
    modulation_ids: np.ndarray
    snr_codes: np.ndarray
    flags: np.ndarray
    spec: CorpusSpec | None = None
    manifest: DatasetManifest | None = None

    def __len__(self):
        return len(self.class_ids)

    @property
    def snr_db(self) -> np.ndarray:
        """Per-record SNR in dB; ``inf`` where no noise was added."""
        out = self.snr_codes.astype(float)
        out[self.snr_codes == SNR_INF] = math.inf
        return out

    def subset(self, mask) -> Corpus:
        idx = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask)
        return Corpus(self.name, self.kind, self.nfft, self.features[idx], self.class_ids[idx],
                      self.modulation_ids[idx], self.snr_codes[idx], self.flags[idx], self.spec, self.manifest)

    def first_per_class(self, n: int, classes=KNOWN_CLASSES) -> Corpus:
        """Keep the first ``n`` records of each listed class (file order)."""
        keep = np.zeros(len(self), dtype=bool)
        for cls in classes:
            keep[np.flatnonzero(self.class_ids == int(cls))[:n]] = True
        return self.subset(keep)

    def known_only(self) -> Corpus:
        return self.subset(self.class_ids < len(KNOWN_CLASSES))


def parse_corpus_bytes(data: bytes, name: str = "") -> Corpus:
    if len(data) < 4 or data[:4] != MAGIC:
        raise NotACorpusError("not a corpus file")
    if len(data) < HEADER.size + 4:
        raise CorruptHeaderError("corpus file shorter than its header")
    _, version, count, dim, kind_id = HEADER.unpack_from(data)
    if version != VERSION:
        raise CorpusVersionError(f"unsupported corpus format version {version}")
    (stored_crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CorpusChecksumError("corpus checksum mismatch (file truncated or corrupted)")
    try:
        kind = FeatureKind(kind_id)
    except ValueError:
        raise CorruptHeaderError(f"unknown feature kind {kind_id}") from None
    dtype = record_dtype(dim)
    body = data[HEADER.size : -4]
    if len(body) != count * dtype.itemsize:
        raise CorruptHeaderError(f"header declares {count} x {dtype.itemsize} bytes, body has {len(body)}")
    rec = np.frombuffer(body, dtype=dtype)
    return Corpus(name, kind, dim, np.array(rec["x"], dtype=np.float32), rec["cls"].copy(), rec["mod"].copy(),
                  rec["snr"].copy(), rec["flags"].copy())


def load_corpus(path, name: str | None = None) -> Corpus:
    """Load ``path`` (a ``.swf`` file, or a directory plus ``name``).

    The ``manifest.json`` beside the file, when present, is attached.
    """
    path = Path(path)
    if path.is_dir():
        if name is None:
            raise ValueError("loading from a directory needs a corpus name")
        path = path / f"{name}.swf"
    corpus = parse_corpus_bytes(path.read_bytes(), path.stem)
    manifest_path = path.parent / "manifest.json"
    if manifest_path.exists():
        manifest = DatasetManifest.load(manifest_path)
        corpus.manifest = manifest
        try:
            corpus.spec = manifest.corpus(corpus.name)
        except KeyError:
            pass
    return corpus


# --- raw IQ files --------------------------------------------------------------

def write_iq(path, sig: IQSignal) -> None:
    """Interleaved little-endian f32 I/Q pairs plus a ``.json`` sidecar."""
    path = Path(path)
    inter = np.empty(2 * len(sig), dtype="<f4")
    inter[0::2], inter[1::2] = sig.samples.real, sig.samples.imag
    path.write_bytes(inter.tobytes())
    Path(str(path) + ".json").write_text(json.dumps({"sample_rate_hz": sig.sample_rate_hz}) + "\n")


def read_iq(path, sample_rate_hz: float | None = None) -> IQSignal:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) == 0 or len(raw) % 8:
        raise ValueError(f"{path}: IQ file must hold a whole, non-zero number of f32 pairs")
    sidecar = Path(str(path) + ".json")
    if sample_rate_hz is None:
        if not sidecar.exists():
            raise ValueError(f"{path}: missing sidecar {sidecar.name}")
        sample_rate_hz = float(json.loads(sidecar.read_text())["sample_rate_hz"])
    inter = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    return IQSignal(inter[0::2] + 1j * inter[1::2], sample_rate_hz)


def export_signal(manifest: DatasetManifest, index: int, corpus_name: str, path) -> IQSignal:
    """Regenerate signal ``index`` with ``corpus_name``'s impairments and write it as raw IQ."""
    plan = signal_plan(manifest)[index]
    sig = clean_signal(manifest, plan)
    _, param_rng, chan_seed = signal_seeds(manifest.master_seed, plan.index, manifest.split)
    cfg = impairment_config(manifest.corpus(corpus_name).impairments, param_rng.random(6), chan_seed)
    out = impair(sig, cfg)
    write_iq(path, out)
    return out
