"""Command-line entry point. Exit codes: 0 ok, 1 usage, 2 data error, 3 model error."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import classifier, datastore, evalharness, watchdog
from .features import FeatureKind, extract
from .neural import ModelFormatError, load_model, save_model

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 0, 1, 2, 3

log = logging.getLogger("wavewatch")


class DataError(Exception):
    pass


class ModelError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_corpus(data_dir, name) -> datastore.Corpus:
    try:
        return datastore.load_corpus(data_dir, name)
    except (OSError, datastore.CorpusFormatError, datastore.ManifestError) as exc:
        raise DataError(str(exc)) from exc


def _load_model(path):
    try:
        return load_model(path)
    except (OSError, ModelFormatError) as exc:
        raise ModelError(f"{path}: {exc}") from exc


def _load_regions(path) -> watchdog.RegionSet:
    try:
        return watchdog.RegionSet.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ModelError(f"{path}: {exc}") from exc


def _progress(done, total):
    if done % 500 == 0 or done == total:
        log.info("generated %d/%d signals", done, total)


def cmd_gen(args):
    if args.manifest and Path(args.manifest).exists():
        try:
            manifest = datastore.DatasetManifest.load(args.manifest)
        except (ValueError, KeyError) as exc:
            raise DataError(str(exc)) from exc
        if args.seed is not None:
            manifest.master_seed = args.seed
    else:
        manifest = datastore.default_manifest(args.profile, args.split, args.seed or 0)
        if args.manifest:
            manifest.save(args.manifest)
    paths = datastore.generate_corpus(manifest, args.out, workers=args.workers, progress=_progress)
    for name, path in paths.items():
        print(f"{name}\t{path}")


def cmd_train_classifier(args):
    corpus = _load_corpus(args.data, args.corpus)
    model = classifier.build_classifier(seed=args.seed)
    known = corpus.known_only()
    try:
        res = classifier.train_classifier(
            model, known.features, known.class_ids, epochs=args.epochs, batch_size=args.batch, seed=args.seed,
            kind=corpus.kind, lr=args.lr, callback=lambda e, loss: log.info("epoch %d loss %.5f", e + 1, loss))
    except classifier.FeatureKindError as exc:
        raise DataError(str(exc)) from exc
    save_model(res.model, args.out)


def _watchdog_corpus(args) -> datastore.Corpus:
    corpus = _load_corpus(args.data, args.corpus or f"watchdog_{args.nfft}")
    if corpus.nfft != args.nfft:
        raise DataError(f"corpus {corpus.name} has nfft {corpus.nfft}, expected {args.nfft}")
    corpus = corpus.known_only()
    if args.per_class:
        corpus = corpus.first_per_class(args.per_class)
    return corpus


def cmd_train_watchdog(args):
    corpus = _watchdog_corpus(args)
    floor = corpus.spec.impairments.snr_floor if corpus.spec else None
    model = watchdog.build_autoencoder(args.nfft, seed=args.seed, l2=args.l2)
    try:
        res = watchdog.train_watchdog(
            model, corpus.features, epochs=args.epochs, batch_size=args.batch, lr=args.lr, seed=args.seed,
            kind=corpus.kind, snr_db=corpus.snr_db, declared_snr_floor_db=floor,
            callback=lambda e, loss: log.info("epoch %d loss %.5f", e + 1, loss))
    except (watchdog.CorpusRejectedError, watchdog.FeatureKindError) as exc:
        raise DataError(str(exc)) from exc
    save_model(res.model, args.out)


def cmd_calibrate(args):
    model = _load_model(args.model)
    args.nfft = watchdog.autoencoder_nfft(model)
    corpus = _watchdog_corpus(args)
    errs = watchdog.reconstruction_rmse(model, corpus.features)
    per_class = {int(c): errs[corpus.class_ids == int(c)] for c in np.unique(corpus.class_ids)}
    try:
        regions = watchdog.calibrate_regions(per_class, args.design, nfft=args.nfft)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    regions.save(args.out)


def _write(report, args):
    for path in evalharness.export_report(report, args.report, args.format):
        print(path)


def cmd_eval_classifier(args):
    model = _load_model(args.model)
    try:
        report = evalharness.eval_classifier(model, _load_corpus(args.test, args.corpus or "classifier"))
    except evalharness.EvalKindError as exc:
        raise DataError(str(exc)) from exc
    _write(report, args)


def cmd_eval_ablation(args):
    model = _load_model(args.model)
    try:
        manifest = datastore.DatasetManifest.load(Path(args.test) / "manifest.json")
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    corpora = [_load_corpus(args.test, c.name) for c in manifest.corpora]
    try:
        reports = evalharness.eval_ablation(model, corpora, args.axis)
    except evalharness.EvalKindError as exc:
        raise DataError(str(exc)) from exc
    base = Path(args.report)
    for value, report in reports.items():
        tag = "off" if value is None else f"{value:g}"
        args.report = base.with_name(f"{base.stem}_{args.axis}_{tag}{base.suffix}")
        _write(report, args)


def cmd_eval_detector(args):
    model = _load_model(args.model)
    regions = _load_regions(args.regions)
    nfft = watchdog.autoencoder_nfft(model)
    corpus = _load_corpus(args.test, args.corpus or f"detector_awgn_{nfft}")
    try:
        report = evalharness.eval_detector(model, regions, corpus)
    except evalharness.EvalKindError as exc:
        raise DataError(str(exc)) from exc
    _write(report, args)


def cmd_classify(args):
    clf = _load_model(args.model)
    ae = _load_model(args.watchdog)
    regions = _load_regions(args.regions)
    try:
        sig = datastore.read_iq(args.iq, args.sample_rate)
        psd = extract(sig, FeatureKind.PSD_DB, watchdog.autoencoder_nfft(ae))
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    verdict = watchdog.detect(watchdog.reconstruction_rmse(ae, psd.values), regions)
    out = {"rmse": verdict.rmse, "verdict": verdict.verdict.value, "region": verdict.matched_region}
    if verdict.verdict is watchdog.Verdict.KNOWN:
        try:
            probs, label = classifier.predict(clf, extract(sig, FeatureKind.FFT_MAG, clf.input_shape[0]))
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        out.update({"class": label.name, "probabilities": [float(p) for p in probs]})
    print(json.dumps(out))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wavewatch", description="Waveform classification with an autoencoder watchdog.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate corpora from a manifest")
    g.add_argument("--manifest", help="manifest JSON; written from the built-in profile if missing")
    g.add_argument("--out", required=True)
    g.add_argument("--profile", choices=("paper", "desk"), default="desk")
    g.add_argument("--split", choices=("train", "test"), default="train")
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int, default=1)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train-classifier")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--corpus", default="classifier")
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--batch", type=int, default=128)
    t.add_argument("--lr", type=float, default=0.002)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_train_classifier)

    w = sub.add_parser("train-watchdog")
    w.add_argument("--data", required=True)
    w.add_argument("--nfft", type=int, choices=(4096, 8192, 16384), required=True)
    w.add_argument("--out", required=True)
    w.add_argument("--corpus", help="default watchdog_<nfft>")
    w.add_argument("--lr", type=float, default=watchdog.DEFAULT_LR)
    w.add_argument("--l2", type=float, default=watchdog.L2_COEFF)
    w.add_argument("--epochs", type=int, default=50)
    w.add_argument("--batch", type=int, default=128)
    w.add_argument("--per-class", type=int, help="train on the first N records of each class")
    w.add_argument("--seed", type=int, default=0)
    w.set_defaults(func=cmd_train_watchdog)

    c = sub.add_parser("calibrate")
    c.add_argument("--model", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--design", choices=("two", "three", "five"), required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--corpus", help="default watchdog_<nfft>")
    c.add_argument("--per-class", type=int)
    c.set_defaults(func=cmd_calibrate)

    for name, func in (("eval-classifier", cmd_eval_classifier), ("eval-ablation", cmd_eval_ablation),
                       ("eval-detector", cmd_eval_detector)):
        e = sub.add_parser(name)
        e.add_argument("--model", required=True)
        e.add_argument("--test", required=True)
        e.add_argument("--report", required=True)
        e.add_argument("--format", choices=("csv", "json"), default="csv")
        if name == "eval-ablation":
            e.add_argument("--axis", choices=sorted(evalharness.ABLATION_AXES), required=True)
        else:
            e.add_argument("--corpus")
        if name == "eval-detector":
            e.add_argument("--regions", required=True)
        e.set_defaults(func=func)

    k = sub.add_parser("classify", help="watchdog first, classifier only on KNOWN verdicts")
    k.add_argument("--model", required=True)
    k.add_argument("--watchdog", required=True)
    k.add_argument("--regions", required=True)
    k.add_argument("--iq", required=True)
    k.add_argument("--sample-rate", type=float, help="overrides the sidecar")
    k.set_defaults(func=cmd_classify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (datastore.CorpusFormatError, datastore.ManifestError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ModelFormatError, classifier.FeatureKindError, watchdog.FeatureKindError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
