import time
from types import SimpleNamespace

import numpy as np
import pytest

from wavewatch.classifier import build_classifier, train_classifier
from wavewatch.datastore import default_manifest, generate_corpus, load_corpus
from wavewatch.evalharness import eval_classifier, eval_detector
from wavewatch.sigsynth import KNOWN_CLASSES
from wavewatch.watchdog import Design, build_autoencoder, calibrate_regions, reconstruction_rmse, train_watchdog


def averaged_periodogram(x, nperseg):
    """Hann-windowed, 50%-overlap averaged periodogram written directly in numpy.

    Returns (frequency in cycles/sample, power per bin) in natural FFT order.
    Used as an independent reference for spectral tests.
    """
    x = np.asarray(x)
    win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(nperseg) / nperseg)
    step = nperseg // 2
    starts = range(0, len(x) - nperseg + 1, step)
    acc = np.zeros(nperseg)
    for s in starts:
        acc += np.abs(np.fft.fft(x[s : s + nperseg] * win)) ** 2
    acc /= len(starts) * np.sum(win**2)
    return np.fft.fftfreq(nperseg), acc


def band_fraction(x, fs, f_lim, nperseg=1024):
    """Fraction of total power within |f| <= f_lim."""
    f, p = averaged_periodogram(x, nperseg)
    return p[np.abs(f * fs) <= f_lim].sum() / p.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# autoencoder settings for desk-scale runs (see README, "Watchdog training")
DESK_AE = {"lr": 3e-4, "l2": 0.0, "batch": 8, "epochs": 20, "per_class": 200}

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def _subset(manifest, names):
    manifest.corpora = [c for c in manifest.corpora if c.name in names]
    return manifest


@pytest.fixture(scope="session")
def desk_data(tmp_path_factory):
    """Desk train/test corpora. Only the corpora the scaled runs read are written;
    per-signal draws do not depend on which corpora a manifest lists."""
    root = tmp_path_factory.mktemp("desk")
    t0 = time.perf_counter()
    train = _subset(default_manifest("desk", "train"), {"classifier", "watchdog_awgn_4096"})
    test = _subset(default_manifest("desk", "test"), {"classifier", "classifier_awgn", "detector_awgn_4096"})
    generate_corpus(train, root / "train")
    generate_corpus(test, root / "test")
    return SimpleNamespace(root=root, train=root / "train", test=root / "test",
                           seconds=time.perf_counter() - t0)


@pytest.fixture(scope="session")
def desk_classifier(desk_data):
    t0 = time.perf_counter()
    corpus = load_corpus(desk_data.train, "classifier")
    res = train_classifier(build_classifier(seed=0), corpus.features, corpus.class_ids, epochs=50, seed=0)
    report = eval_classifier(res.model, load_corpus(desk_data.test, "classifier"))
    return SimpleNamespace(model=res.model, loss_history=res.loss_history, report=report,
                           seconds=time.perf_counter() - t0)


@pytest.fixture(scope="session")
def desk_watchdog(desk_data):
    t0 = time.perf_counter()
    corpus = load_corpus(desk_data.train, "watchdog_awgn_4096").first_per_class(DESK_AE["per_class"])
    model = build_autoencoder(4096, seed=0, l2=DESK_AE["l2"])
    res = train_watchdog(model, corpus.features, epochs=DESK_AE["epochs"], batch_size=DESK_AE["batch"],
                         lr=DESK_AE["lr"], seed=0, snr_db=corpus.snr_db,
                         declared_snr_floor_db=corpus.spec.impairments.snr_floor)
    train_rmse = reconstruction_rmse(res.model, corpus.features)
    per_class = {c: train_rmse[corpus.class_ids == int(c)] for c in KNOWN_CLASSES}
    regions = {d: calibrate_regions(per_class, d, nfft=4096) for d in Design}
    test = load_corpus(desk_data.test, "detector_awgn_4096")
    test_rmse = reconstruction_rmse(res.model, test.features)
    reports = {d: eval_detector(res.model, r, test, rmse_values=test_rmse) for d, r in regions.items()}
    return SimpleNamespace(model=res.model, loss_history=res.loss_history, train_rmse=train_rmse,
                           per_class=per_class, regions=regions, reports=reports,
                           seconds=time.perf_counter() - t0)
