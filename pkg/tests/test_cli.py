import csv
import json

import numpy as np
import pytest
import yaml

from conftest import SMALL
from v2xbeam import cli
from v2xbeam.dataset import Dataset


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "run.yaml"
    cfg.write_text(yaml.safe_dump(SMALL))
    assert cli.main(["generate", "--config", str(cfg), "--out", str(d / "ds.bin")]) == 0
    return d


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_generate_matches_library(work, small_dataset):
    assert Dataset.load(work / "ds.bin").digest() == small_dataset.digest()


def test_train_eval_report(work):
    ds = str(work / "ds.bin")
    assert cli.main(["train", "--dataset", ds, "--model", "vdban", "--out", str(work / "v.ck")]) == 0
    assert cli.main(["train", "--dataset", ds, "--model", "bct", "--out", str(work / "b.ck")]) == 0
    trace = _rows(work / "v.ck.trace.csv")
    assert len(trace) == 2 and set(trace[0]) == {"config_hash", "epoch", "train_loss", "val_top1_atrr"}

    out = work / "report.csv"
    assert cli.main(["eval", "--dataset", ds, "--checkpoint", str(work / "v.ck"), "--bct-checkpoint",
                     str(work / "b.ck"), "--knn", "--oracle", "--out", str(out)]) == 0
    rows = _rows(out)
    assert list(rows[0]) == cli.REPORT_COLUMNS
    assert len({r["config_hash"] for r in rows}) == 1
    predictors = {r["predictor"] for r in rows}
    assert {"oracle", "vdban", "knn", "fixed", "perfect_bct", "bct_model"} <= predictors
    oracle = [r for r in rows if r["predictor"] == "oracle"]
    assert all(float(r["value"]) == 1.0 for r in oracle)
    fixed1 = [r for r in rows if r["predictor"] == "fixed" and r["M_f"] == "1"]
    for r in fixed1:
        assert float(r["value"]) == pytest.approx(1 - float(r["tb_over_td"]), abs=1e-15)
    assert any(r["metric"] == "atrr_s_sweep" and r["sigma_c"] == "0.5" for r in rows)
    assert any(r["metric"] == "bctpa" for r in rows)

    series = work / "series.csv"
    assert cli.main(["report", str(out), "--out", str(series)]) == 0
    s = _rows(series)
    assert set(s[0]) == {"config_hash", "series", "x", "y"}
    assert any(r["series"].startswith("fixed_bct/") for r in s)


def test_export(work):
    out = work / "export"
    assert cli.main(["export", "--dataset", str(work / "ds.bin"), "--out-dir", str(out)]) == 0
    meta = json.loads((out / "meta.json").read_text())
    index = _rows(out / "index.csv")
    assert len(index) == meta["n_records"]
    vdf = np.fromfile(out / "vdf.bin", dtype="<f4").reshape(meta["files"]["vdf.bin"]["shape"])
    ds = Dataset.load(work / "ds.bin")
    np.testing.assert_array_equal(vdf, ds.records["vdf"])
    assert (out / "sif.bin").exists() and (out / "rates.bin").exists()
    assert {r["split"] for r in index} == {"train", "validation", "test"}


def test_validation_exit_codes(work, tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("channel:\n  num_subcarriers: -4\n")
    assert cli.main(["generate", "--config", str(bad), "--out", str(tmp_path / "x.bin")]) == 1
    assert "channel.num_subcarriers" in capsys.readouterr().err
    assert cli.main(["generate", "--config", str(tmp_path / "missing.yaml"),
                     "--out", str(tmp_path / "x.bin")]) == 1
    assert cli.main(["eval", "--dataset", str(tmp_path / "none.bin"), "--out", "r.csv"]) == 1
    assert cli.main(["generate", "--config", str(bad), "--out", "x", "--workers", "0"]) == 1
    assert not (tmp_path / "x.bin").exists()


def test_pairs_mismatch_refused(work, tmp_path, capsys):
    ck = work / "v.ck"
    if not ck.exists():
        assert cli.main(["train", "--dataset", str(work / "ds.bin"), "--model", "vdban",
                         "--out", str(ck)]) == 0
    ds = Dataset.load(work / "ds.bin")
    header = dict(ds.header)
    header["pairs"] = list(reversed(header["pairs"]))
    other = tmp_path / "other.bin"
    Dataset(header, ds.records).save(other)
    assert cli.main(["eval", "--dataset", str(other), "--checkpoint", str(ck),
                     "--out", str(tmp_path / "r.csv")]) == 1
    assert "beam-pair" in capsys.readouterr().err
    assert not (tmp_path / "r.csv").exists()


def test_runtime_failure_exit_code(work, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("disk on fire")
    monkeypatch.setattr(cli, "generate", boom)
    cfg = tmp_path / "c.yaml"
    cfg.write_text("scenarios: 3\n")
    assert cli.main(["generate", "--config", str(cfg), "--out", str(tmp_path / "d.bin")]) == 2
