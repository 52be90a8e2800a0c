"""Acceptance suite: each criterion asserted at its stated tolerance.

Every test prints one ``ACCEPTANCE <n> ... PASS`` line (visible with -s).
The desk-scale training criterion uses the real image/label IDX files when a
directory is configured (see datasets.find_mnist_dir); otherwise it builds the
deterministic synthetic stand-in, written and read back through the same IDX
pipeline, and applies identical thresholds.
"""

import time

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from lawq import dataio
from lawq.cli import main as cli_main
from lawq.datasets import Dataset, find_mnist_dir, load_idx_pair, load_mnist, write_synthetic_idx
from lawq.qset import build_qset
from lawq.quantizers import quantize_mbit, ternarize_approx
from lawq.suites import (GRADCHECK_NET_SEED, suite_approx_quality, suite_gradcheck,
                         suite_oracle_mbit, suite_oracle_ternary, suite_oracle_two_scale,
                         suite_properties, suite_twn_reduction)
from lawq.training import (NetworkState, ScheduleConfig, TrainConfig, clips_weights,
                           network_blobs, train)

SUITE_SEED = 20240808
TRIALS = 1000


def _announce(n: int, label: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {n:2d} {label}: {status} {detail}".rstrip())
    assert ok, f"criterion {n} ({label}) failed: {detail}"


def test_01_exact_solver_optimality():
    report = suite_oracle_ternary(TRIALS, SUITE_SEED)
    ok = report.ok and report.wall_time < 60.0
    _announce(1, "exact-solver optimality vs enumeration", ok,
              f"failures={len(report.failures)} max_rel={report.max_rel_gap:.2e} "
              f"wall={report.wall_time:.1f}s")


def test_02_uniform_curvature_reduction():
    report = suite_twn_reduction(TRIALS, SUITE_SEED + 1)
    _announce(2, "uniform-curvature threshold reduction", report.ok,
              f"failures={len(report.failures)}")


def test_03_approximate_solver_quality():
    report = suite_approx_quality(TRIALS, SUITE_SEED + 2)
    detail = (f"failures={len(report.failures)} "
              f"median_sweeps={report.extras['median_sweeps']} "
              f"within_1pct={100 * report.extras['within_1pct_rate']:.1f}%")
    _announce(3, "approximate-solver quality", report.ok, detail)


def test_04_two_scale_vs_oracle():
    report = suite_oracle_two_scale(TRIALS, SUITE_SEED + 3)
    _announce(4, "two-scale optimality and dominance", report.ok,
              f"failures={len(report.failures)} max_rel={report.max_rel_gap:.2e}")


def test_05_mbit_descent_and_grid():
    report = suite_oracle_mbit(TRIALS, SUITE_SEED + 4)
    iterate_identical = True
    qs2 = build_qset(2)
    for i in range(TRIALS):
        rng = np.random.default_rng([SUITE_SEED + 5, i])
        n = int(rng.integers(1, 11))
        w = rng.uniform(-1, 1, n)
        d = rng.uniform(0.1, 10, n)
        init = np.sign(w).astype(np.int8)
        a = ternarize_approx(w, d, codes_init=init)
        b = quantize_mbit(w, d, qs2, codes_init=init)
        if not (a.alpha == b.alpha and np.array_equal(a.codes, b.codes)
                and a.n_iter == b.n_iter and a.objective_sweeps == b.objective_sweeps):
            iterate_identical = False
            break
    ok = report.ok and iterate_identical
    _announce(5, "m-bit descent, grid witness, ternary reduction", ok,
              f"failures={len(report.failures)} "
              f"within_grid={100 * report.extras['within_grid_rate']:.1f}% "
              f"iterate_identical={iterate_identical}")


def test_06_invariance_properties():
    # trials cycle homogeneity / curvature-scale / permutation: 1000 each
    report = suite_properties(3 * TRIALS, SUITE_SEED + 6)
    _announce(6, "homogeneity and invariance properties", report.ok,
              f"failures={len(report.failures)} over {3 * TRIALS} trials")


def test_07_gradient_check():
    report = suite_gradcheck(1, seed=GRADCHECK_NET_SEED)
    _announce(7, "analytic gradients vs central differences", report.ok,
              f"worst_rel={report.max_rel_gap:.2e} (tol 1e-4)")


# ---------------------------------------------------------------------------
# Desk-scale training (shared across criteria 8 and 9)
# ---------------------------------------------------------------------------

TRAIN_METHODS = ("full_precision", "lat-approx", "twn")
TRAIN_SEEDS = (0, 1, 2, 3, 4)
N_TRAIN, N_TEST = 10_000, 2_000


@pytest.fixture(scope="module")
def desk_dataset(tmp_path_factory):
    base = find_mnist_dir()
    if base is not None:
        data = load_mnist(base, N_TRAIN, N_TEST)
        return "mnist", data
    out = tmp_path_factory.mktemp("idxdata")
    paths = write_synthetic_idx(str(out), N_TRAIN, N_TEST, seed=123)
    x_train, y_train = load_idx_pair(paths["train_images"], paths["train_labels"])
    x_test, y_test = load_idx_pair(paths["test_images"], paths["test_labels"])
    return "synthetic", Dataset(x_train, y_train, x_test=x_test, y_test=y_test)


@pytest.fixture(scope="module")
def desk_runs(desk_dataset):
    source, data = desk_dataset
    results = {}
    for method in TRAIN_METHODS:
        errors = []
        nets = []
        for seed in TRAIN_SEEDS:
            cfg = TrainConfig(
                method=method, epochs=10, batch_size=100, seed=seed, hidden=(128, 128),
                schedule=ScheduleConfig(lr=0.01, kind="milestones", factor=0.1,
                                        milestones=(15, 25)),
                val_fraction=0.1)
            start = time.perf_counter()
            net, metrics = train(cfg, data)
            elapsed = time.perf_counter() - start
            assert elapsed <= 900.0, f"{method} seed {seed} took {elapsed:.0f}s"
            test_rows = [m for m in metrics if m.split == "test"]
            errors.append(test_rows[-1].error_rate)
            nets.append(net)
        results[method] = {"errors": np.array(errors), "nets": nets}
    return source, results


def test_08_desk_scale_training(desk_runs):
    source, results = desk_runs
    fp = 100.0 * results["full_precision"]["errors"].mean()
    lat = 100.0 * results["lat-approx"]["errors"].mean()
    twn = 100.0 * results["twn"]["errors"].mean()
    ok = (fp <= 5.0) and (abs(lat - fp) <= 2.0) and (lat <= twn + 0.5)
    _announce(8, f"desk-scale training ({source})", ok,
              f"full_precision={fp:.2f}% lat-approx={lat:.2f}% twn={twn:.2f}% "
              f"(gates: fp<=5, |lat-fp|<=2, lat<=twn+0.5)")


def _check_checkpoint_closure(net, method: str, bits: int) -> None:
    blobs = network_blobs(net)
    weights = blobs["weights"]
    if clips_weights(method, bits):
        for rec in weights.records:
            if rec.name.endswith("/w"):
                assert np.max(np.abs(rec.values)) <= 1.0, f"{method}: weights escaped [-1, 1]"
    quant = blobs["quant"]
    if quant is None:
        return
    roundtrip = dataio.read_blob(dataio.write_blob(quant))
    for rec in roundtrip.records:
        recon = rec.reconstruct()
        if quant.kind == "quantized_one_scale":
            admissible = rec.alpha * rec.qset().values
            assert np.all(np.isin(recon, admissible)), f"{method}: reconstruction escaped alpha*Q"
            assert np.all(np.abs(rec.codes) <= rec.qset().levels)
        else:
            allowed = {rec.alpha, 0.0, -rec.beta}
            assert set(np.unique(recon)) <= allowed, f"{method}: reconstruction escaped two-scale set"


def test_09_reconstruction_closure_and_clipping(desk_runs):
    _, results = desk_runs
    for method in ("lat-approx", "twn"):
        for net in results[method]["nets"]:
            _check_checkpoint_closure(net, method, 2)

    # cover the remaining checkpoint kinds with short runs
    rng = np.random.default_rng(0)
    half = 150
    x = np.vstack([rng.normal(-1.0, 0.5, (half, 6)), rng.normal(1.0, 0.5, (half, 6))])
    y = np.array([0] * half + [1] * half)
    toy = Dataset(x, y)
    for method, bits in [("lat-exact", 2), ("lat2-approx", 2), ("lat2-exact", 2),
                         ("sign", 2), ("bwn", 2), ("lab", 2), ("laq", 3)]:
        cfg = TrainConfig(method=method, bits=bits, scheme="log", epochs=3,
                          batch_size=25, seed=0, hidden=(8,),
                          schedule=ScheduleConfig(lr=0.05, kind="constant"))
        net, _ = train(cfg, toy)
        _check_checkpoint_closure(net, method, bits)
    _announce(9, "checkpoint reconstruction closure and clipping", True,
              "bitwise membership via integer codes on every checkpoint kind")


def test_10_metrics_determinism(tmp_path):
    cfg_text = (
        "[quantizer]\nmethod = lat-approx\n"
        "[train]\nepochs = 3\nbatch_size = 25\nhidden = 16\nseed = 0\n"
        "[schedule]\nlr = 0.01\nkind = constant\n"
        "[data]\nsource = synthetic\nn_train = 400\nn_test = 100\n")
    cfg = tmp_path / "train.ini"
    cfg.write_text(cfg_text)
    outs = []
    for name in ("run_a", "run_b"):
        out = tmp_path / name
        assert cli_main(["train", "--config", str(cfg), "--seed", "7",
                         "--out", str(out)]) == 0
        outs.append((out / "metrics.csv").read_bytes())
    ok = outs[0] == outs[1]
    _announce(10, "byte-identical metrics across reruns", ok,
              f"{len(outs[0])} bytes compared")
