import numpy as np
import pytest

from wavewatch.channel import add_awgn, apply_phase
from wavewatch.classifier import (
    FeatureKindError, build_classifier, one_hot, predict, predict_labels, predict_proba, train_classifier,
)
from wavewatch.features import FeatureKind, fft_mag, psd_db
from wavewatch.neural import Dense, Model, Sigmoid
from wavewatch.sigsynth import KNOWN_CLASSES, ModulationScheme, WaveformClass, desk_spec, synthesize


def closed_form_count(sizes):
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def test_architecture():
    model = build_classifier(seed=0)
    assert model.n_parameters() == closed_form_count([4096, 64, 100, 32, 16, 4]) == 272_536
    kinds = [type(l).__name__ for l in model.layers]
    assert kinds == ["Dense", "ReLU", "Dropout"] * 4 + ["Dense", "Sigmoid"]
    out = model.predict(np.random.default_rng(0).uniform(size=(3, 4096)))
    assert out.shape == (3, 4) and np.all((out > 0) & (out < 1))


def test_seeded_build():
    a, b = build_classifier(seed=5), build_classifier(seed=5)
    assert all(np.array_equal(p, q) for p, q in zip(a.parameters(), b.parameters()))
    c = build_classifier(seed=6)
    assert not np.array_equal(a.parameters()[0], c.parameters()[0])


def test_one_hot():
    assert np.array_equal(one_hot([0, 3]), [[1, 0, 0, 0], [0, 0, 0, 1]])
    with pytest.raises(ValueError):
        one_hot([4])


def test_feature_kind_checks():
    model = build_classifier()
    x = np.zeros((2, 4096))
    with pytest.raises(FeatureKindError):
        train_classifier(model, x, [0, 1], epochs=1, kind=FeatureKind.PSD_DB)
    with pytest.raises(FeatureKindError):
        train_classifier(model, np.zeros((2, 100)), [0, 1], epochs=1)
    sig = synthesize(desk_spec(WaveformClass.SC, ModulationScheme.BPSK, seed=1))
    with pytest.raises(FeatureKindError):
        predict(model, psd_db(sig))
    with pytest.raises(FeatureKindError):
        predict_proba(model, np.zeros(10))


def test_tie_break_lowest_index():
    dense = Dense(4096, 4, dtype=np.float64)
    dense.params["W"][:] = 0
    stub = Model([dense, Sigmoid()], (4096,))
    assert predict_labels(stub, np.zeros((2, 4096))).tolist() == [0, 0]


def _corpus(per_class, seed=0):
    feats, labels = [], []
    for cls in KNOWN_CLASSES:
        for i in range(per_class):
            mod = ModulationScheme(i % 8) if cls is not WaveformClass.LFM else None
            feats.append(fft_mag(synthesize(desk_spec(cls, mod, seed=seed * 100_000 + i))).values)
            labels.append(int(cls))
    return np.array(feats, dtype=np.float32), np.array(labels)


def test_training_history_and_determinism():
    x, y = _corpus(6)
    runs = [train_classifier(build_classifier(seed=1), x, y, epochs=3, batch_size=8, seed=2) for _ in range(2)]
    assert len(runs[0].loss_history) == 3
    assert runs[0].loss_history == runs[1].loss_history
    for p, q in zip(runs[0].model.parameters(), runs[1].model.parameters()):
        assert np.array_equal(p, q)


@pytest.fixture(scope="module")
def noiseless_model():
    x, y = _corpus(400)
    res = train_classifier(build_classifier(seed=0), x, y, epochs=50, batch_size=128, seed=0)
    return res, x, y


def test_noiseless_training_accuracy(noiseless_model):
    res, x, y = noiseless_model
    assert np.mean(predict_labels(res.model, x) == y) >= 0.99


def test_loss_history_smoothed_non_increasing():
    # smoke corpus: 50 signals per class, 30 epochs
    x, y = _corpus(50, seed=1)
    hist = np.array(train_classifier(build_classifier(seed=0), x, y, epochs=30, seed=0).loss_history)
    smooth = np.convolve(hist, np.ones(5) / 5, mode="valid")
    assert np.all(np.diff(smooth) <= 0)


def test_prediction_invariances(noiseless_model):
    model = noiseless_model[0].model
    for cls in KNOWN_CLASSES:
        mod = ModulationScheme.QAM16 if cls is not WaveformClass.LFM else None
        sig = synthesize(desk_spec(cls, mod, seed=999))
        probs, label = predict(model, fft_mag(sig))
        assert probs.shape == (4,) and np.all((probs > 0) & (probs < 1))
        for phi in (-3.0, -1.0, 0.5, 2.9):
            assert predict(model, fft_mag(apply_phase(sig, phi)))[1] is label
        assert predict(model, fft_mag(sig.with_samples(0.1 * sig.samples)))[1] is label


def test_desk_model_lfm_at_10db(desk_classifier):
    feats = [fft_mag(add_awgn(synthesize(desk_spec(WaveformClass.LFM, seed=70_000 + i)), 10.0, seed=i)).values
             for i in range(400)]
    labels = predict_labels(desk_classifier.model, np.array(feats))
    assert np.mean(labels == int(WaveformClass.LFM)) >= 0.99
