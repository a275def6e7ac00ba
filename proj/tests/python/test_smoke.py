import math
import os
import xml.dom.minidom

import numpy as np
import pytest

import condensor

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "fixtures")


def test_pearson_and_decision():
    assert condensor.pearson_r([(0, 1), (1, 3), (2, 5)]) == pytest.approx(1.0)
    assert condensor.pearson_r([(1, 2), (2, 2), (3, 4)]) == pytest.approx(math.sqrt(3) / 2, abs=1e-4)
    with pytest.raises(condensor.DataError, match="degenerate correlation input"):
        condensor.pearson_r([(1, 0), (1, 1)])
    assert condensor.sharing_decision(0.8918, 0.7914) == "DISTILL_FURTHER"
    assert condensor.sharing_decision(0.5, 0.5) == "SHARE_RANDOM_SUBSET"


def test_indicator_report_on_fixture():
    rep = condensor.indicator_report(os.path.join(FIXTURES, "table1_ipc50.csv"))
    assert rep["r"]["mtt"] > rep["r"]["dc"]
    best = {d["dataset"]: d["decision"] for d in rep["decisions"] if d["method"] == "best"}
    assert best["OCTMNIST"] == "SHARE_RANDOM_SUBSET"
    assert best["BloodMNIST"] == "DISTILL_FURTHER"
    xml.dom.minidom.parseString(rep["svg"])


def test_dataset_round_trip(tmp_path):
    train, test = condensor.make_texture_dataset(classes=3, size=8, train=30, test=9, seed=2)
    assert train.pixels.shape == (30, 1, 8, 8)
    assert train.pixels.dtype == np.uint8
    assert sorted(set(train.labels.tolist())) == [0, 1, 2]
    path = tmp_path / "t.mdds"
    condensor.save_dataset(train, path)
    back = condensor.load_dataset(path)
    assert np.array_equal(back.pixels, train.pixels)
    assert condensor.git_blob_sha1(path.read_bytes()) == condensor.git_blob_sha1(path.read_bytes())
    path.write_bytes(path.read_bytes()[:40])
    with pytest.raises(condensor.FormatError):
        condensor.load_dataset(path)


def test_trajectory_loss_and_selftest():
    assert condensor.trajectory_loss([0.5, 0], [0, 0], [1, 0]) == pytest.approx(0.25)
    assert condensor.git_blob_sha1(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"
    checks = condensor.selftest(quick=True)
    assert checks and all(ok for _, ok, _ in checks)
