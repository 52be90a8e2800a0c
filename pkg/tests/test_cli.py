import os

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lawq import dataio
from lawq.cli import main

TRAIN_INI = """
[quantizer]
method = {method}

[train]
epochs = 2
batch_size = 25
hidden = 12
seed = 0

[schedule]
lr = 0.01
kind = constant

[data]
source = synthetic
n_train = 300
n_test = 80
"""


@pytest.fixture
def weight_blob(tmp_path):
    path = tmp_path / "w.lawq"
    rec = dataio.FullRecord("layer0", (3,), np.array([0.9, 0.4, -0.1]))
    dataio.write_blob_file(path, dataio.WeightBlob("full_precision", [rec]))
    return path


@pytest.fixture
def curvature_blob(tmp_path):
    path = tmp_path / "c.lawq"
    rec = dataio.FullRecord("layer0", (3,), np.ones(3))
    dataio.write_blob_file(path, dataio.WeightBlob("full_precision", [rec]))
    return path


class TestQuantize:
    def test_lat_exact_report(self, tmp_path, weight_blob, curvature_blob):
        out = tmp_path / "q.lawq"
        report = tmp_path / "r.csv"
        rc = main(["quantize", "--input", str(weight_blob), "--curvature",
                   str(curvature_blob), "--method", "lat-exact",
                   "--output", str(out), "--report", str(report)])
        assert rc == 0
        lines = report.read_text().splitlines()
        assert lines[0].startswith("layer,method,alpha")
        fields = lines[1].split(",")
        assert float(fields[2]) == pytest.approx(0.65)
        blob = dataio.read_blob_file(out)
        assert blob.kind == "quantized_one_scale"

    def test_loss_aware_requires_curvature(self, tmp_path, weight_blob):
        rc = main(["quantize", "--input", str(weight_blob), "--method", "lat-exact",
                   "--output", str(tmp_path / "q.lawq")])
        assert rc == 2

    def test_plain_method_forbids_curvature(self, tmp_path, weight_blob, curvature_blob):
        rc = main(["quantize", "--input", str(weight_blob), "--curvature",
                   str(curvature_blob), "--method", "twn",
                   "--output", str(tmp_path / "q.lawq")])
        assert rc == 2

    def test_twn_runs_without_curvature(self, tmp_path, weight_blob):
        out = tmp_path / "q.lawq"
        assert main(["quantize", "--input", str(weight_blob), "--method", "twn",
                     "--output", str(out)]) == 0
        assert out.exists()

    def test_laq_two_bit_equals_lat_approx(self, tmp_path, weight_blob, curvature_blob):
        out_a = tmp_path / "a.lawq"
        out_b = tmp_path / "b.lawq"
        assert main(["quantize", "--input", str(weight_blob), "--curvature",
                     str(curvature_blob), "--method", "laq", "--bits", "2",
                     "--scheme", "linear", "--output", str(out_a)]) == 0
        assert main(["quantize", "--input", str(weight_blob), "--curvature",
                     str(curvature_blob), "--method", "lat-approx",
                     "--output", str(out_b)]) == 0
        a = dataio.read_blob_file(out_a).records[0]
        b = dataio.read_blob_file(out_b).records[0]
        assert_allclose(a.reconstruct(), b.reconstruct(), rtol=1e-12)

    def test_unknown_method(self, tmp_path, weight_blob):
        rc = main(["quantize", "--input", str(weight_blob), "--method", "magic",
                   "--output", str(tmp_path / "q.lawq")])
        assert rc == 2

    def test_dorefa_writes_reconstruction(self, tmp_path, weight_blob):
        out = tmp_path / "q.lawq"
        assert main(["quantize", "--input", str(weight_blob), "--method", "dorefa",
                     "--bits", "3", "--output", str(out)]) == 0
        blob = dataio.read_blob_file(out)
        assert blob.kind == "full_precision"
        assert not np.any(blob.records[0].values == 0.0)


class TestTrain:
    def test_outputs_and_determinism(self, tmp_path):
        cfg = tmp_path / "train.ini"
        cfg.write_text(TRAIN_INI.format(method="lat-approx"))
        out1 = tmp_path / "run1"
        out2 = tmp_path / "run2"
        assert main(["train", "--config", str(cfg), "--seed", "5", "--out", str(out1)]) == 0
        assert main(["train", "--config", str(cfg), "--seed", "5", "--out", str(out2)]) == 0
        m1 = (out1 / "metrics.csv").read_bytes()
        m2 = (out2 / "metrics.csv").read_bytes()
        assert m1 == m2
        for name in ("metrics.csv", "alphas.csv", "checkpoint_weights.lawq",
                     "optimizer.lawq", "checkpoint_quant.lawq"):
            assert (out1 / name).exists()

    def test_full_precision_mode(self, tmp_path):
        cfg = tmp_path / "train.ini"
        cfg.write_text(TRAIN_INI.format(method="full_precision"))
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        assert not (out / "checkpoint_quant.lawq").exists()

    def test_alpha_columns_every_epoch(self, tmp_path):
        cfg = tmp_path / "train.ini"
        cfg.write_text(TRAIN_INI.format(method="lat-approx"))
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "alphas.csv").read_text().splitlines()
        assert lines[0] == "epoch,layer,alpha"
        assert len(lines) == 1 + 2 * 2  # two epochs, two layers


class TestVerify:
    def test_twn_reduction_suite_passes(self, capsys):
        assert main(["verify", "--suite", "twn-reduction", "--trials", "60",
                     "--seed", "1"]) == 0
        assert "failures=0" in capsys.readouterr().out

    def test_zero_trials_usage_error(self):
        assert main(["verify", "--suite", "oracle-ternary", "--trials", "0"]) == 2

    def test_unknown_suite_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["verify", "--suite", "bogus"])
        assert exc.value.code == 2

    def test_report_csv(self, tmp_path):
        out = tmp_path / "rep.csv"
        assert main(["verify", "--suite", "properties", "--trials", "30",
                     "--seed", "0", "--out", str(out)]) == 0
        assert out.read_text().splitlines()[0].startswith("suite,trials,failures")


class TestCompare:
    def test_grid_and_summary(self, tmp_path):
        cfg = tmp_path / "train.ini"
        cfg.write_text(TRAIN_INI.format(method="lat-approx"))
        out = tmp_path / "cmp"
        rc = main(["compare", "--config", str(cfg), "--methods",
                   "full_precision,twn", "--seeds", "0,1", "--out", str(out)])
        assert rc == 0
        lines = (out / "summary.csv").read_text().splitlines()
        assert lines[0] == "method,seed,final_test_error,mean,std"
        assert len(lines) == 5  # 2 methods x 2 seeds
        for method in ("full_precision", "twn"):
            rows = [l for l in lines[1:] if l.startswith(method + ",")]
            means = {l.split(",")[3] for l in rows}
            assert len(means) == 1  # same aggregate per method

    def test_unknown_method_fails_fast(self, tmp_path):
        cfg = tmp_path / "train.ini"
        cfg.write_text(TRAIN_INI.format(method="lat-approx"))
        out = tmp_path / "cmp"
        rc = main(["compare", "--config", str(cfg), "--methods", "twn,bogus",
                   "--seeds", "0", "--out", str(out)])
        assert rc == 2
        assert not (out / "summary.csv").exists()


class TestExportHist:
    def test_quantized_layer_rows(self, tmp_path):
        cfg = tmp_path / "train.ini"
        cfg.write_text(TRAIN_INI.format(method="lat-approx"))
        run = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--out", str(run)]) == 0
        out = tmp_path / "h.csv"
        assert main(["export-hist", "--input", str(run / "checkpoint_quant.lawq"),
                     "--layer", "dense0/w", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "bin_left,bin_right,count"
        assert 1 <= len(lines) - 1 <= 3  # ternary layer: at most three values

    def test_full_precision_bins(self, tmp_path, weight_blob):
        out = tmp_path / "h.csv"
        assert main(["export-hist", "--input", str(weight_blob), "--layer", "layer0",
                     "--bins", "4", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()[1:]
        assert len(lines) == 4
        assert sum(int(l.split(",")[2]) for l in lines) == 3

    def test_missing_layer_lists_names(self, tmp_path, weight_blob, capsys):
        rc = main(["export-hist", "--input", str(weight_blob), "--layer", "nope",
                   "--out", str(tmp_path / "h.csv")])
        assert rc == 1
        assert "layer0" in capsys.readouterr().err
