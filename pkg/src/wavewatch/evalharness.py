"""Accuracy-vs-SNR tables, confusion counts, impairment sweeps, and detector scoring."""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Callable, Mapping
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .classifier import predict_labels
from .datastore import Corpus
from .features import FeatureKind
from .neural import Model
from .sigsynth import ALL_CLASSES, KNOWN_CLASSES, class_from_id
from .watchdog import RegionSet, autoencoder_nfft, known_mask, reconstruction_rmse

SNR_BUCKETS = tuple(float(s) for s in range(-20, 21, 5))
ABLATION_AXES = {"cfo": "freq_offset_hz", "phase": "phase_offset_rad", "iq": "iq_imbalance_db"}
CSV_COLUMNS = ("snr_db", "class", "n", "correct", "accuracy")
RMSE_COLUMNS = ("class", "snr_db", "rmse")


class EvalKindError(ValueError):
    pass


@dataclass
class AccuracyRow:
    snr_db: float
    cls: str
    n: int
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.n if self.n else math.nan


@dataclass
class EvalReport:
    kind: str
    rows: list[AccuracyRow] = field(default_factory=list)
    confusion_labels: list[str] = field(default_factory=list)
    confusion_columns: list[str] = field(default_factory=list)
    confusion: list[list[int]] = field(default_factory=list)
    rmse_dump: list[tuple[str, float, float]] = field(default_factory=list)
    predictions: list[int] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def _select(self, snr_min=-math.inf, snr_max=math.inf, classes=None):
        names = None if classes is None else {getattr(c, "name", c) for c in classes}
        return [r for r in self.rows if snr_min <= r.snr_db <= snr_max and (names is None or r.cls in names)]

    def accuracy(self, snr_min=-math.inf, snr_max=math.inf, classes=None) -> float:
        """Pooled accuracy over rows with ``snr_min <= snr <= snr_max``."""
        rows = self._select(snr_min, snr_max, classes)
        n = sum(r.n for r in rows)
        return sum(r.correct for r in rows) / n if n else math.nan

    def balanced_accuracy(self, snr_db: float) -> float:
        """Mean of per-class accuracies in one SNR bucket."""
        accs = [r.accuracy for r in self.rows if r.snr_db == snr_db and r.n]
        return float(np.mean(accs)) if accs else math.nan

    @property
    def snr_buckets(self) -> list[float]:
        return sorted({r.snr_db for r in self.rows})

    def confusion_matrix(self) -> np.ndarray:
        return np.array(self.confusion, dtype=int).reshape(len(self.confusion_labels), len(self.confusion_columns))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rows"] = [[r.snr_db, r.cls, r.n, r.correct] for r in self.rows]
        d["rmse_dump"] = [list(t) for t in self.rmse_dump]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> EvalReport:
        d = dict(d)
        d["rows"] = [AccuracyRow(float(s), c, int(n), int(k)) for s, c, n, k in d["rows"]]
        d["rmse_dump"] = [(c, float(s), float(e)) for c, s, e in d["rmse_dump"]]
        return cls(**d)


def bucket_snr(snr_db, buckets=SNR_BUCKETS) -> np.ndarray:
    """Nearest bucket centre; noiseless records (``inf``) stay ``inf``."""
    snr = np.asarray(snr_db, dtype=float)
    grid = np.asarray(buckets, dtype=float)
    idx = np.abs(snr[:, None] - grid[None, :]).argmin(axis=1) if grid.size else np.zeros(snr.shape, int)
    out = grid[idx] if grid.size else snr.copy()
    out[np.isinf(snr)] = math.inf
    return out


def _accuracy_rows(class_ids, snr_buckets, correct, classes) -> list[AccuracyRow]:
    rows = []
    for snr in sorted(set(snr_buckets.tolist())):
        in_bucket = snr_buckets == snr
        for cls in classes:
            sel = in_bucket & (class_ids == int(cls))
            if sel.any():
                rows.append(AccuracyRow(float(snr), cls.name, int(sel.sum()), int(correct[sel].sum())))
    return rows


def _labels(model, features) -> np.ndarray:
    if isinstance(model, Model):
        return predict_labels(model, features)
    return np.asarray(model(features), dtype=int)


def eval_classifier(model: Model | Callable, corpus: Corpus, buckets=SNR_BUCKETS,
                    confusion_range=(-20.0, 20.0)) -> EvalReport:
    """Per-class accuracy per SNR bucket plus a 4x4 confusion matrix.

    ``model`` may also be a callable mapping a feature matrix to class ids.
    Records of unknown kinds are ignored; the classifier only knows four.
    """
    if corpus.kind is not FeatureKind.FFT_MAG:
        raise EvalKindError(f"classifier evaluation needs FFT_MAG features, corpus holds {corpus.kind.name}")
    corpus = corpus.known_only()
    labels = _labels(model, corpus.features)
    truth = corpus.class_ids.astype(int)
    snr = corpus.snr_db
    b = bucket_snr(snr, buckets)
    lo, hi = confusion_range
    in_range = (snr >= lo) & (snr <= hi)
    conf = np.zeros((len(KNOWN_CLASSES), len(KNOWN_CLASSES)), dtype=int)
    np.add.at(conf, (truth[in_range], labels[in_range]), 1)
    names = [c.name for c in KNOWN_CLASSES]
    return EvalReport(
        "classifier",
        _accuracy_rows(truth, b, labels == truth, KNOWN_CLASSES),
        names, names, conf.tolist(),
        predictions=labels.tolist(),
        meta={"corpus": corpus.name, "n_records": len(corpus), "confusion_snr_range": list(confusion_range)},
    )


def ablation_value(corpus: Corpus, axis: str) -> float | None:
    """The fixed impairment value a sweep corpus was generated with (None = off)."""
    value = getattr(corpus.spec.impairments, ABLATION_AXES[axis])
    if isinstance(value, list):
        raise EvalKindError(f"{corpus.name}: {axis} is a range, not a fixed sweep value")
    return value


def eval_ablation(model: Model | Callable, corpora: Mapping[str, Corpus] | list[Corpus], axis: str,
                  buckets=SNR_BUCKETS) -> dict[float | None, EvalReport]:
    """One classifier report per value of ``axis`` across single-impairment sweep corpora.

    The key ``None`` holds the corpus with that impairment switched off.
    """
    axis = axis.lower()
    if axis not in ABLATION_AXES:
        raise EvalKindError(f"ablation axis must be one of {sorted(ABLATION_AXES)}, got {axis!r}")
    items = corpora.values() if isinstance(corpora, Mapping) else corpora
    out = {}
    for corpus in items:
        if corpus.spec is None:
            raise EvalKindError(f"{corpus.name}: sweep corpora need their manifest")
        value = ablation_value(corpus, axis)
        if value in out:
            raise EvalKindError(f"{corpus.name}: two corpora share {axis} = {value}; is {axis} the swept axis?")
        report = eval_classifier(model, corpus, buckets)
        report.kind = "ablation"
        report.meta.update(axis=axis, value=value)
        out[value] = report
    return out


def eval_detector(model: Model | None, regions: RegionSet, corpus: Corpus, buckets=SNR_BUCKETS,
                  rmse_values=None) -> EvalReport:
    """Known/unknown verdict accuracy per class and SNR, with a per-signal RMSE dump.

    Known classes score on a KNOWN verdict and unknown kinds on UNKNOWN.
    Pass ``rmse_values`` to reuse reconstruction errors across designs.
    """
    if corpus.kind is not FeatureKind.PSD_DB:
        raise EvalKindError(f"detector evaluation needs PSD_DB features, corpus holds {corpus.kind.name}")
    nffts = {corpus.nfft, regions.nfft or corpus.nfft}
    if model is not None:
        nffts.add(autoencoder_nfft(model))
    if len(nffts) != 1:
        raise EvalKindError(f"nfft mismatch between corpus, regions and model: {sorted(nffts)}")
    if rmse_values is None:
        if model is None:
            raise ValueError("need a model or precomputed rmse_values")
        rmse_values = reconstruction_rmse(model, corpus.features)
    rmse_values = np.atleast_1d(np.asarray(rmse_values, dtype=float))
    known = known_mask(rmse_values, regions)
    is_known_class = corpus.class_ids < len(KNOWN_CLASSES)
    correct = known == is_known_class
    truth = corpus.class_ids.astype(int)
    present = [c for c in ALL_CLASSES if np.any(truth == int(c))]
    conf = [[int(np.sum(known & (truth == int(c)))), int(np.sum(~known & (truth == int(c))))] for c in present]
    snr = corpus.snr_db
    dump = [(class_from_id(int(c)).name, float(s), float(e)) for c, s, e in zip(truth, snr, rmse_values)]
    return EvalReport(
        "detector",
        _accuracy_rows(truth, bucket_snr(snr, buckets), correct, present),
        [c.name for c in present], ["KNOWN", "UNKNOWN"], conf,
        rmse_dump=dump,
        predictions=known.astype(int).tolist(),
        meta={"corpus": corpus.name, "design": regions.design.value, "nfft": corpus.nfft},
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def export_report(report: EvalReport, path, fmt: str = "csv") -> list[Path]:
    """Write ``report``; CSV emits the accuracy table plus confusion/RMSE side files."""
    path = Path(path)
    fmt = fmt.lower()
    if fmt == "json":
        path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        return [path]
    if fmt != "csv":
        raise ValueError(f"format must be csv or json, got {fmt!r}")
    written = [path]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in report.rows:
            w.writerow([_fmt(r.snr_db), r.cls, r.n, r.correct, _fmt(r.accuracy)])
    if report.confusion:
        cpath = path.with_name(path.stem + "_confusion.csv")
        with open(cpath, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true\\pred", *report.confusion_columns])
            for label, row in zip(report.confusion_labels, report.confusion):
                w.writerow([label, *row])
        written.append(cpath)
    if report.rmse_dump:
        rpath = path.with_name(path.stem + "_rmse.csv")
        with open(rpath, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RMSE_COLUMNS)
            for cls, snr, err in report.rmse_dump:
                w.writerow([cls, _fmt(snr), _fmt(err)])
        written.append(rpath)
    return written


def load_report(path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text()))
