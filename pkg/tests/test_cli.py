import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from hardivox.cli import main
from hardivox.volumes import LabelVolume, read_volume


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Small phantom + SH4RI features shared by the CLI chain tests."""
    root = tmp_path_factory.mktemp("cli")
    ph = str(root / "ph")
    assert main(["phantom", "--out", ph, "--dims", "64,64,1", "--snr", "20",
                 "--seed", "11"]) == 0
    feat = str(root / "feat")
    assert main(["features", "--in", ph + "_dwi", "--kind", "sh4ri", "--out", feat]) == 0
    return root


def test_phantom_writes_volumes_and_manifest(workdir):
    dwi = read_volume(str(workdir / "ph_dwi"))
    labels = read_volume(str(workdir / "ph_labels"))
    assert dwi.dims == (64, 64, 1)
    assert isinstance(labels, LabelVolume)
    manifest = json.loads((workdir / "ph_dwi.manifest.json").read_text())
    assert manifest["subcommand"] == "phantom"
    assert manifest["seed"] == 11
    for path, digest in manifest["outputs"].items():
        blob = open(path, "rb").read()
        assert hashlib.sha256(blob).hexdigest() == digest


def test_phantom_reruns_reproduce_checksums(workdir, tmp_path):
    out = str(tmp_path / "ph2")
    assert main(["phantom", "--out", out, "--dims", "64,64,1", "--snr", "20",
                 "--seed", "11"]) == 0
    a = json.loads((workdir / "ph_dwi.manifest.json").read_text())["outputs"]
    b = json.loads(open(out + "_dwi.manifest.json").read())["outputs"]
    assert [v for v in a.values()] == [v for v in b.values()]


def test_features_convolve_train_classify_evaluate(workdir, tmp_path):
    bank = str(tmp_path / "bank.json")
    json.dump({"n": 3, "w": 5,
               "kernels": [[0.0] * 12 + [1.0] + [0.0] * 12 for _ in range(3)]},
              open(bank, "w"))
    conv = str(tmp_path / "conv")
    assert main(["convolve", "--in", str(workdir / "feat"), "--bank", bank,
                 "--out", conv]) == 0
    model = str(tmp_path / "model.json")
    assert main(["train", "--features", conv, "--labels", str(workdir / "ph_labels"),
                 "--out", model]) == 0
    pred = str(tmp_path / "pred")
    assert main(["classify", "--features", conv, "--model", model, "--out", pred]) == 0
    report = str(tmp_path / "report.json")
    assert main(["evaluate", "--predicted", pred, "--truth", str(workdir / "ph_labels"),
                 "--report", report]) == 0
    payload = json.loads(open(report).read())
    assert payload["global_error"] < 0.05  # training-set reclassification
    assert payload["merged_global_error"] <= payload["global_error"]


def test_render_writes_one_ppm_per_slice(workdir, tmp_path):
    out = str(tmp_path / "cmp")
    assert main(["render", "--predicted", str(workdir / "ph_labels"),
                 "--truth", str(workdir / "ph_labels"), "--out", out]) == 0
    data = open(out + "_z0.ppm", "rb").read()
    assert data.startswith(b"P6\n")


def test_timing_prints_exact_value(capsys):
    assert main(["timing", "--voxels", "5242880"]) == 0
    assert capsys.readouterr().out == "640.0\n"


def test_optimize_writes_bank_history_checkpoint(tmp_path):
    from cases import toy_quadrant_volume
    from hardivox.volumes import write_volume

    feats, labels = toy_quadrant_volume(8)
    write_volume(str(tmp_path / "f"), feats)
    write_volume(str(tmp_path / "l"), labels)
    out = str(tmp_path / "best.json")
    assert main(["optimize", "--features", str(tmp_path / "f"),
                 "--labels", str(tmp_path / "l"), "--width", "5",
                 "--population", "8", "--generations", "3", "--elites", "2",
                 "--seed", "4", "--out", out]) == 0
    bank = json.load(open(out))
    assert bank["n"] == 3 and bank["w"] == 5
    rows = list(csv.reader(open(str(tmp_path / "history.csv"))))
    assert rows[0] == ["generation", "best_fitness", "mean_fitness", "elapsed_seconds"]
    assert len(rows) == 4
    ckpt = json.load(open(out + ".checkpoint.json"))
    assert ckpt["generation"] == 2
    assert len(ckpt["population"]) == 8
    manifest = json.loads(open(out + ".manifest.json").read())
    assert set(manifest["outputs"]) >= {out, str(tmp_path / "history.csv")}


def test_exit_codes():
    # unknown flag -> 1, missing input file -> 2, validation -> 1
    assert main(["timing", "--bogus"]) == 1
    assert main(["convolve", "--in", "/nonexistent", "--bank", "/nope",
                 "--out", "/tmp/x"]) == 2
    assert main(["phantom", "--out", "/tmp/x", "--dims", "3,3"]) == 1
    assert main(["--threads", "0", "timing", "--voxels", "1"]) == 1


def test_threads_flag_does_not_change_results(tmp_path):
    a = str(tmp_path / "a")
    b = str(tmp_path / "b")
    assert main(["--threads", "1", "phantom", "--out", a, "--dims", "64,64,1",
                 "--seed", "3"]) == 0
    assert main(["--threads", "4", "phantom", "--out", b, "--dims", "64,64,1",
                 "--seed", "3"]) == 0
    assert open(a + "_dwi.raw", "rb").read() == open(b + "_dwi.raw", "rb").read()


def test_console_script_entry_point():
    out = subprocess.run(["hardivox", "timing", "--voxels", "12288"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.strip() == "1.5"


def test_usage_error_prints_to_stderr(capsys):
    assert main(["frobnicate"]) == 1
    err = capsys.readouterr().err
    assert "usage" in err.lower()
