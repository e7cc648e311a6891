import json
import subprocess
import sys

import pytest

from wavewatch.cli import main
from wavewatch.datastore import CorpusSpec, DatasetManifest, ImpairmentRanges, export_signal
from wavewatch.sigsynth import ALL_CLASSES


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    manifest = DatasetManifest(
        "desk", "train", 4, 16384, {c.name: 2 for c in ALL_CLASSES},
        [
            CorpusSpec("classifier", "fft_mag", 4096, ImpairmentRanges.all_impairments([-20.0, 20.0])),
            CorpusSpec("watchdog_4096", "psd_db", 4096, ImpairmentRanges.awgn_only([0.0, 20.0])),
            CorpusSpec("detector_awgn_4096", "psd_db", 4096, ImpairmentRanges.awgn_only([-10.0, 20.0], 5.0)),
        ],
    )
    manifest.save(root / "manifest.json")
    assert main(["gen", "--manifest", str(root / "manifest.json"), "--out", str(root / "data")]) == 0
    return root, manifest


def run(*argv):
    return main([str(a) for a in argv])


def test_pipeline(workspace, tmp_path, capsys):
    root, manifest = workspace
    data = root / "data"
    clf, ae, regions = tmp_path / "clf.npz", tmp_path / "ae.npz", tmp_path / "regions.json"
    assert run("train-classifier", "--data", data, "--out", clf, "--epochs", 1, "--batch", 8) == 0
    assert run("train-watchdog", "--data", data, "--nfft", 4096, "--out", ae, "--epochs", 1, "--batch", 4,
               "--per-class", 1, "--lr", 3e-4, "--l2", 0) == 0
    assert run("calibrate", "--model", ae, "--data", data, "--design", "three", "--out", regions) == 0
    assert json.loads(regions.read_text())["design"] == "three"

    assert run("eval-classifier", "--model", clf, "--test", data, "--report", tmp_path / "c.csv") == 0
    assert (tmp_path / "c_confusion.csv").exists()
    assert run("eval-detector", "--model", ae, "--regions", regions, "--test", data,
               "--report", tmp_path / "d.json", "--format", "json") == 0
    assert json.loads((tmp_path / "d.json").read_text())["kind"] == "detector"

    export_signal(manifest, 0, "watchdog_4096", tmp_path / "x.iq")
    capsys.readouterr()
    assert run("classify", "--model", clf, "--watchdog", ae, "--regions", regions, "--iq", tmp_path / "x.iq") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["verdict"] in ("KNOWN", "UNKNOWN")
    assert ("class" in out) == (out["verdict"] == "KNOWN")


def test_gen_bad_split_is_usage_error(tmp_path):
    target = tmp_path / "m.json"
    proc = subprocess.run([sys.executable, "-m", "wavewatch", "gen", "--manifest", str(target), "--out",
                           str(tmp_path / "d"), "--profile", "paper", "--split", "bogus"], capture_output=True)
    assert proc.returncode == 1 and not target.exists()


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["train-watchdog", "--data", "x", "--out", "y", "--nfft", "1000"])
    assert exc.value.code == 1


def test_data_errors(workspace, tmp_path):
    root, _ = workspace
    assert run("train-classifier", "--data", tmp_path / "missing", "--out", tmp_path / "m.npz") == 2
    assert run("train-watchdog", "--data", root / "data", "--nfft", 4096, "--corpus", "detector_awgn_4096",
               "--out", tmp_path / "m.npz", "--epochs", 1) == 2
    assert run("train-watchdog", "--data", root / "data", "--nfft", 8192, "--out", tmp_path / "m.npz") == 2


def test_model_errors(workspace, tmp_path):
    root, _ = workspace
    junk = tmp_path / "junk.npz"
    junk.write_bytes(b"not a model")
    assert run("eval-classifier", "--model", junk, "--test", root / "data", "--report", tmp_path / "r.csv") == 3
    assert run("calibrate", "--model", junk, "--data", root / "data", "--design", "two",
               "--out", tmp_path / "r.json") == 3


def test_wrong_feature_kind_is_data_error(workspace, tmp_path):
    root, _ = workspace
    clf = tmp_path / "clf.npz"
    assert run("train-classifier", "--data", root / "data", "--out", clf, "--epochs", 1) == 0
    assert run("eval-classifier", "--model", clf, "--test", root / "data", "--corpus", "watchdog_4096",
               "--report", tmp_path / "r.csv") == 2
    assert run("train-classifier", "--data", root / "data", "--corpus", "watchdog_4096",
               "--out", tmp_path / "m.npz", "--epochs", 1) == 2
    (tmp_path / "classifier.swf").write_bytes(b"nope")
    assert run("eval-classifier", "--model", clf, "--test", tmp_path, "--report", tmp_path / "r.csv") == 2
    assert run("eval-classifier", "--model", tmp_path / "absent.npz", "--test", root / "data",
               "--report", tmp_path / "r.csv") == 3
