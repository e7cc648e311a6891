"""Acceptance suite. Each test prints one ``CRITERION n: PASS|FAIL`` line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the lines are also
collected into the terminal summary.
"""

import time
import zlib

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, DESK_AE
from gradcheck import LAYER_KINDS, run_trials
from wavewatch.channel import add_awgn, apply_phase
from wavewatch.classifier import build_classifier, predict_labels, predict_proba
from wavewatch.cli import main
from wavewatch.datastore import (
    CorpusChecksumError, CorpusSpec, CorpusVersionError, CorruptHeaderError, DatasetManifest, ImpairmentRanges,
    NotACorpusError, generate_corpus, load_corpus, parse_corpus_bytes,
)
from wavewatch.features import fft_mag
from wavewatch.neural import Adamax, ModelFormatError, load_model, save_model
from wavewatch.neural.serialize import (
    ModelVersionError, NotAModelFileError, TruncatedModelError, model_from_bytes, model_to_bytes,
)
from wavewatch.sigsynth import ALL_CLASSES, KNOWN_CLASSES, UNKNOWN_KINDS, ModulationScheme, WaveformClass, \
    desk_spec, synthesize
from wavewatch.watchdog import Design, build_autoencoder, calibrate_regions, known_mask


def record(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_01_gradient_oracle():
    t0 = time.perf_counter()
    worst = {kind: run_trials(kind, trials=50) for kind in LAYER_KINDS}
    secs = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and secs < 60
    record(1, ok, f"max rel err {max(worst.values()):.2e} over {len(worst)} kinds x 50 trials, {secs:.1f}s")


def test_criterion_02_adamax_step():
    theta = np.zeros(1)
    Adamax(lr=0.002).step([theta], [np.ones(1)])
    err = abs(theta[0] - (-0.002))
    record(2, err <= 1e-12, f"theta={theta[0]!r}, |err|={err:.1e}")


def test_criterion_03_snr_calibration():
    t0 = time.perf_counter()
    worst = 0.0
    for k, target in enumerate((-20, -10, 0, 10, 20)):
        measured = []
        for trial in range(100):
            sig = synthesize(desk_spec(WaveformClass.OFDM, ModulationScheme.QPSK, seed=trial))
            noisy = add_awgn(sig, target, seed=[k, trial])
            noise = noisy.samples - sig.samples
            measured.append(10 * np.log10(np.mean(np.abs(sig.samples) ** 2) / np.mean(np.abs(noise) ** 2)))
        worst = max(worst, abs(np.mean(measured) - target))
    secs = time.perf_counter() - t0
    record(3, worst <= 0.1 and secs < 60, f"worst |mean SNR error| {worst:.4f} dB, {secs:.1f}s")


def test_criterion_04_phase_invariance(desk_classifier):
    t0 = time.perf_counter()
    model = desk_classifier.model
    phases = np.linspace(-np.pi, np.pi, 13)
    label_mismatch, worst_prob = 0, 0.0
    for cls in KNOWN_CLASSES:
        for seed in range(10):
            mod = ModulationScheme(seed % 8) if cls is not WaveformClass.LFM else None
            sig = add_awgn(synthesize(desk_spec(cls, mod, seed=5000 + seed)), 5.0, seed=seed)
            feats = np.array([fft_mag(apply_phase(sig, phi)).values for phi in phases])
            labels = predict_labels(model, feats)
            probs = predict_proba(model, feats)
            label_mismatch += int(np.any(labels != labels[0]))
            worst_prob = max(worst_prob, float(np.max(np.abs(probs - probs[0]))))
    secs = time.perf_counter() - t0
    record(4, label_mismatch == 0 and secs < 60,
           f"{label_mismatch} label changes over 40 signals x 13 phases, max prob delta {worst_prob:.1e}, {secs:.1f}s")


def test_criterion_05_scaled_classifier(desk_classifier, desk_data):
    rep = desk_classifier.report
    hi = rep.accuracy(snr_min=10)
    lfm = rep.accuracy(snr_min=0, classes=[WaveformClass.LFM])
    low = rep.accuracy(snr_min=-10, snr_max=-10)
    secs = desk_classifier.seconds + desk_data.seconds
    ok = hi >= 0.95 and lfm >= 0.99 and low >= 0.60 and desk_classifier.seconds < 30 * 60
    record(5, ok, f"acc>=+10dB {hi:.3f}, LFM>=0dB {lfm:.3f}, acc@-10dB {low:.3f}; "
                  f"train+eval {desk_classifier.seconds:.0f}s (+{desk_data.seconds:.0f}s shared corpus gen)")


def test_criterion_06_confusion_structure(desk_classifier):
    conf = desk_classifier.report.confusion_matrix()
    names = desk_classifier.report.confusion_labels
    sym = conf + conf.T
    np.fill_diagonal(sym, -1)
    i, j = np.unravel_index(np.argmax(sym), sym.shape)
    pair = {names[i], names[j]}
    record(6, pair == {"OFDM", "SCFDMA"}, f"largest off-diagonal pair {sorted(pair)} ({sym[i, j]}); matrix {conf.tolist()}")


def test_criterion_07_region_nesting():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    violations = 0
    for _ in range(1000):
        lists = {c: rng.uniform(0, 1, rng.integers(1, 30)) * rng.uniform(0.1, 3) for c in KNOWN_CLASSES}
        probes = rng.uniform(0, 3, 200)
        two, three, five = (known_mask(probes, calibrate_regions(lists, d)) for d in Design)
        violations += int(np.sum(five & ~three) + np.sum(three & ~two))
    secs = time.perf_counter() - t0
    record(7, violations == 0 and secs < 60, f"{violations} violations in 1000 datasets, {secs:.1f}s")


def test_criterion_08_calibration_self_consistency(desk_watchdog):
    rng = np.random.default_rng(8)
    misses, total = 0, 0
    for d, regions in desk_watchdog.regions.items():
        misses += int(np.sum(~known_mask(desk_watchdog.train_rmse, regions)))
        total += desk_watchdog.train_rmse.size
    for _ in range(200):
        lists = {c: rng.uniform(0, 1, rng.integers(1, 20)) for c in KNOWN_CLASSES}
        for d in Design:
            values = np.concatenate(list(lists.values()))
            misses += int(np.sum(~known_mask(values, calibrate_regions(lists, d))))
            total += values.size
    record(8, misses == 0, f"{total - misses}/{total} calibration RMSEs self-classified KNOWN")


def test_criterion_09_scaled_detector(desk_watchdog):
    two, three = desk_watchdog.reports[Design.TWO], desk_watchdog.reports[Design.THREE]
    order = {s: (three.balanced_accuracy(s), two.balanced_accuracy(s)) for s in three.snr_buckets}
    ordered = all(t >= w for t, w in order.values())
    unknown = [k.name for k in UNKNOWN_KINDS]
    rejection = three.accuracy(snr_min=20, snr_max=20, classes=unknown)
    ok = ordered and rejection >= 0.8 and desk_watchdog.seconds < 45 * 60
    curve = ", ".join(f"{s:+.0f}dB {t:.3f}/{w:.3f}" for s, (t, w) in order.items())
    record(9, ok, f"THREE/TWO acc [{curve}]; unknown rejection @+20dB {rejection:.3f}; {desk_watchdog.seconds:.0f}s "
                  f"(lr {DESK_AE['lr']}, L2 {DESK_AE['l2']}, {DESK_AE['per_class']}/class, {DESK_AE['epochs']} epochs)")


def _pipeline(root):
    manifest = DatasetManifest(
        "desk", "train", 21, 16384, {c.name: 3 for c in ALL_CLASSES},
        [
            CorpusSpec("classifier", "fft_mag", 4096, ImpairmentRanges.all_impairments([-20.0, 20.0], 5.0)),
            CorpusSpec("watchdog_4096", "psd_db", 4096, ImpairmentRanges.awgn_only([0.0, 20.0], 5.0)),
            CorpusSpec("detector_awgn_4096", "psd_db", 4096, ImpairmentRanges.awgn_only([-10.0, 20.0], 5.0)),
        ],
    )
    root.mkdir()
    manifest.save(root / "manifest.json")
    data = root / "data"
    steps = [
        ["gen", "--manifest", root / "manifest.json", "--out", data],
        ["train-classifier", "--data", data, "--out", root / "clf.bin", "--epochs", 3, "--batch", 8, "--seed", 5],
        ["train-watchdog", "--data", data, "--nfft", 4096, "--out", root / "ae.bin", "--epochs", 2, "--batch", 4,
         "--per-class", 2, "--lr", DESK_AE["lr"], "--l2", DESK_AE["l2"], "--seed", 5],
        ["calibrate", "--model", root / "ae.bin", "--data", data, "--design", "three", "--out", root / "regions.json"],
        ["eval-classifier", "--model", root / "clf.bin", "--test", data, "--report", root / "clf.csv"],
        ["eval-detector", "--model", root / "ae.bin", "--regions", root / "regions.json", "--test", data,
         "--report", root / "det.csv"],
    ]
    for argv in steps:
        assert main([str(a) for a in argv]) == 0, argv
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_10_determinism(tmp_path, capsys):
    a = _pipeline(tmp_path / "a")
    b = _pipeline(tmp_path / "b")
    capsys.readouterr()
    kinds = {".swf", ".bin", ".csv"}
    compared = [k for k in a if k.suffix in kinds]
    diff = [str(k) for k in a if a[k] != b.get(k)]
    ok = set(a) == set(b) and not diff and {k.suffix for k in compared} == kinds
    record(10, ok, f"{len(a)} artifacts ({len(compared)} corpora/models/CSVs) compared, differing: {diff or 'none'}")


def _raises(fn, exc):
    try:
        fn()
    except exc:
        return True
    except Exception:
        return False
    return False


def test_criterion_11_format_round_trips(tmp_path):
    checks = {}
    for name, model in (("classifier", build_classifier(seed=3)), ("autoencoder", build_autoencoder(8192, seed=3))):
        save_model(model, tmp_path / f"{name}.bin")
        back = load_model(tmp_path / f"{name}.bin")
        same = all(p.tobytes() == q.tobytes() for p, q in zip(model.parameters(), back.parameters()))
        checks[f"{name} model bit-exact"] = same and model_to_bytes(back) == model_to_bytes(model)

    manifest = DatasetManifest("desk", "test", 11, 16384, {c.name: 2 for c in ALL_CLASSES},
                               [CorpusSpec("psd", "psd_db", 4096, ImpairmentRanges.awgn_only([-10.0, 20.0]))])
    path = generate_corpus(manifest, tmp_path / "corpus")["psd"]
    data = path.read_bytes()
    corpus = load_corpus(path)
    checks["corpus bit-exact"] = (
        corpus.features.astype("<f4").tobytes() == np.frombuffer(data[15:-4], dtype=[("x", "<f4", 4096),
                                                                                  ("m", "u1", 4)])["x"].tobytes()
    )
    bad_magic = b"XXXX" + data[4:]
    bad_version = data[:4] + (7).to_bytes(2, "little") + data[6:]
    lying = bytearray(data[:-4])
    lying[6:10] = (len(corpus) + 1).to_bytes(4, "little")
    lying = bytes(lying) + zlib.crc32(bytes(lying)).to_bytes(4, "little")
    checks["corpus wrong magic"] = _raises(lambda: parse_corpus_bytes(bad_magic), NotACorpusError)
    checks["corpus version"] = _raises(lambda: parse_corpus_bytes(bad_version), CorpusVersionError)
    checks["corpus truncated"] = _raises(lambda: parse_corpus_bytes(data[:-1000]), CorpusChecksumError)
    checks["corpus header"] = _raises(lambda: parse_corpus_bytes(lying), CorruptHeaderError)

    blob = model_to_bytes(build_classifier(seed=3))
    checks["model wrong magic"] = _raises(lambda: model_from_bytes(b"JUNK" + blob[4:]), NotAModelFileError)
    checks["model version"] = _raises(lambda: model_from_bytes(blob[:4] + b"\x09\x00" + blob[6:]), ModelVersionError)
    checks["model truncated"] = _raises(lambda: model_from_bytes(blob[:-10]), TruncatedModelError)
    checks["model trailing bytes"] = _raises(lambda: model_from_bytes(blob + b"\0"), ModelFormatError)
    failed = [k for k, v in checks.items() if not v]
    record(11, not failed, f"{len(checks) - len(failed)}/{len(checks)} checks; failed: {failed or 'none'}")
