"""Command-line interface.

Exit codes: 0 success, 1 domain error (degenerate input, oracle failure,
missing data), 2 usage error (bad flags, unknown method, bad config value).
No subcommand leaves partial output files behind on failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import dataio
from .datasets import (Dataset, find_mnist_dir, load_idx_pair, load_mnist,
                       write_synthetic_idx)
from .errors import LawqError
from .quantizers import quantize_dorefa
from .suites import SUITES
from .training import (CURVATURE_METHODS, METHODS, network_blobs,
                       quantize_layer, train)

USAGE_ERROR = 2
DOMAIN_ERROR = 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LawqError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DOMAIN_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lawq",
                                     description="Loss-aware weight quantization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="quantize the layers of a weight blob")
    p.add_argument("--input", required=True, help="full-precision weight blob")
    p.add_argument("--curvature", help="curvature blob (loss-aware methods only)")
    p.add_argument("--method", required=True)
    p.add_argument("--bits", type=int, default=2)
    p.add_argument("--scheme", default="linear", choices=["linear", "log"])
    p.add_argument("--output", required=True)
    p.add_argument("--report", help="per-layer report CSV")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("train", help="train a network from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="overrides the seed from the config (default 0)")
    p.add_argument("--out", required=True)
    p.add_argument("--wall-clock", action="store_true",
                   help="record real wall time in metrics.csv (breaks byte-level "
                        "reproducibility of the file)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", help="run a randomized verification suite")
    p.add_argument("--suite", required=True, choices=sorted(SUITES))
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report as CSV")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", help="train every (method, seed) cell and summarize")
    p.add_argument("--config", required=True)
    p.add_argument("--methods", required=True, help="comma-separated method ids")
    p.add_argument("--seeds", required=True, help="comma-separated seeds")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export-hist", help="histogram of one layer of a blob")
    p.add_argument("--input", required=True)
    p.add_argument("--layer", required=True)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_hist)
    return parser


def _usage(message: str) -> int:
    print(f"usage error: {message}", file=sys.stderr)
    return USAGE_ERROR


# ---------------------------------------------------------------------------
# quantize
# ---------------------------------------------------------------------------

def cmd_quantize(args) -> int:
    if args.method not in [m for m in METHODS if m != "full_precision"]:
        return _usage(f"unknown method {args.method!r}")
    needs_curv = args.method in CURVATURE_METHODS
    if needs_curv and not args.curvature:
        return _usage(f"method {args.method!r} requires --curvature")
    if not needs_curv and args.curvature:
        return _usage(f"method {args.method!r} does not take --curvature")

    blob = dataio.read_blob_file(args.input)
    if blob.kind != "full_precision":
        return _usage(f"--input must be a full-precision blob, got {blob.kind!r}")
    curv = {}
    if args.curvature:
        cblob = dataio.read_blob_file(args.curvature)
        if cblob.kind != "full_precision":
            return _usage("--curvature must be a full-precision blob")
        curv = {rec.name: rec.values for rec in cblob.records}

    out_records = []
    report_lines = ["layer,method,alpha,beta,objective,iterations,converged,degenerate"]
    kind = None
    for rec in blob.records:
        w = rec.values
        d = curv.get(rec.name)
        if needs_curv and d is None:
            raise LawqError(f"curvature blob has no record named {rec.name!r}")
        if args.method == "dorefa":
            recon = quantize_dorefa(w, args.bits)
            out_records.append(dataio.FullRecord(rec.name, rec.dims, recon))
            kind = "full_precision"
            report_lines.append(f"{rec.name},dorefa,,,,,,")
            continue
        result = quantize_layer(args.method, w, d if d is not None else np.ones(w.size),
                                args.bits, args.scheme, None)
        if result.beta is not None:
            out_records.append(dataio.TwoScaleRecord(
                rec.name, rec.dims, result.alpha, result.beta, result.codes.copy(),
                result.degenerate_pos, result.degenerate_neg))
            kind = "quantized_two_scale"
            beta_txt = repr(float(result.beta))
        else:
            out_records.append(dataio.OneScaleRecord(
                rec.name, rec.dims, result.qset.kind, result.qset.bits,
                result.alpha, result.codes.copy(), result.degenerate))
            kind = "quantized_one_scale"
            beta_txt = ""
        report_lines.append(
            f"{rec.name},{args.method},{float(result.alpha)!r},{beta_txt},"
            f"{float(result.objective)!r},{result.n_iter},{result.converged},"
            f"{result.degenerate or result.degenerate_pos or result.degenerate_neg}")

    dataio.write_blob_file(args.output, dataio.WeightBlob(kind, out_records))
    if args.report:
        dataio.atomic_write_text(args.report, "\n".join(report_lines) + "\n")
    print(f"quantized {len(out_records)} layer(s) with {args.method} -> {args.output}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _load_dataset(data_spec: dict, out_dir: str, seed: int) -> Dataset:
    source = data_spec["source"]
    if source == "synthetic":
        data_dir = os.path.join(out_dir, "data")
        paths = write_synthetic_idx(data_dir, data_spec["n_train"], data_spec["n_test"],
                                    seed=seed, noise=data_spec["noise"])
        x_train, y_train = load_idx_pair(paths["train_images"], paths["train_labels"])
        x_test, y_test = load_idx_pair(paths["test_images"], paths["test_labels"])
        return Dataset(x_train, y_train, x_test=x_test, y_test=y_test)
    if source == "idx":
        for key in ("train_images", "train_labels"):
            if not data_spec.get(key):
                raise LawqError(f"data source 'idx' requires {key}")
        x_train, y_train = load_idx_pair(data_spec["train_images"],
                                         data_spec["train_labels"],
                                         data_spec.get("limit_train"))
        x_test = y_test = None
        if data_spec.get("test_images"):
            x_test, y_test = load_idx_pair(data_spec["test_images"],
                                           data_spec["test_labels"],
                                           data_spec.get("limit_test"))
        return Dataset(x_train, y_train, x_test=x_test, y_test=y_test)
    if source == "mnist":
        base = data_spec.get("dir") or find_mnist_dir()
        if base is None:
            raise LawqError("no image/label IDX directory found; set [data] dir "
                            "or the LAWQ_MNIST_DIR environment variable")
        return load_mnist(base, data_spec.get("limit_train") or data_spec["n_train"],
                          data_spec.get("limit_test") or data_spec["n_test"])
    raise LawqError(f"unknown data source {source!r}")


def _write_run_outputs(out_dir: str, net, metrics: list) -> None:
    os.makedirs(out_dir, exist_ok=True)
    dataio.atomic_write_text(os.path.join(out_dir, "metrics.csv"),
                             dataio.metrics_csv(metrics, net.n_layers))
    lines = ["epoch,layer,alpha"]
    for row in metrics:
        if row.split == "train":
            for li, alpha in enumerate(row.alphas):
                lines.append(f"{row.epoch},{li},{float(alpha)!r}")
    dataio.atomic_write_text(os.path.join(out_dir, "alphas.csv"), "\n".join(lines) + "\n")
    blobs = network_blobs(net)
    dataio.write_blob_file(os.path.join(out_dir, "checkpoint_weights.lawq"), blobs["weights"])
    dataio.write_blob_file(os.path.join(out_dir, "optimizer.lawq"), blobs["optimizer"])
    if blobs["quant"] is not None:
        dataio.write_blob_file(os.path.join(out_dir, "checkpoint_quant.lawq"), blobs["quant"])


def cmd_train(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = dataio.parse_config(fh.read())
    train_cfg, data_spec = dataio.config_to_train_config(cfg)
    if args.seed is not None:
        from dataclasses import replace
        train_cfg = replace(train_cfg, seed=args.seed)
    print(f"lawq train: method={train_cfg.method} seed={train_cfg.seed} "
          f"epochs={train_cfg.epochs} out={args.out}")
    data = _load_dataset(data_spec, args.out, seed=train_cfg.seed)
    net, metrics = train(train_cfg, data, record_wall_time=args.wall_clock)
    _write_run_outputs(args.out, net, metrics)
    final = [m for m in metrics if m.split in ("test", "val", "train")][-1]
    print(f"final {final.split} error_rate={final.error_rate:.4f} "
          f"(degenerate quantizations: {net.degenerate_events})")
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args) -> int:
    if args.trials < 1:
        return _usage("--trials must be >= 1")
    print(f"lawq verify: suite={args.suite} trials={args.trials} seed={args.seed}")
    report = SUITES[args.suite](args.trials, args.seed)
    print(f"trials={report.trials} failures={len(report.failures)} "
          f"max_abs_gap={report.max_abs_gap:.3e} max_rel_gap={report.max_rel_gap:.3e} "
          f"wall={report.wall_time:.2f}s")
    for key, value in sorted(report.extras.items()):
        print(f"  {key} = {value}")
    for key, desc in report.failures[:20]:
        print(f"  FAIL {key}: {desc}")
    if args.out:
        dataio.atomic_write_text(args.out, "\n".join(report.csv_rows()) + "\n")
    return 0 if report.ok else DOMAIN_ERROR


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def cmd_compare(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not methods or not seeds:
        return _usage("--methods and --seeds must be non-empty")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        return _usage(f"unknown method(s): {', '.join(unknown)}")
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = dataio.parse_config(fh.read())
    base_cfg, data_spec = dataio.config_to_train_config(cfg)
    print(f"lawq compare: methods={methods} seeds={seeds} out={args.out}")

    from dataclasses import replace
    results = []
    os.makedirs(args.out, exist_ok=True)
    for method in methods:
        for seed in seeds:
            run_cfg = replace(base_cfg, method=method, seed=seed)
            run_dir = os.path.join(args.out, method, str(seed))
            os.makedirs(run_dir, exist_ok=True)
            try:
                data = _load_dataset(data_spec, run_dir, seed=seed)
                net, metrics = train(run_cfg, data)
                _write_run_outputs(run_dir, net, metrics)
                tests = [m for m in metrics if m.split == "test"]
                err = tests[-1].error_rate if tests else \
                    [m for m in metrics if m.split == "val"][-1].error_rate
                results.append((method, seed, err))
                print(f"  {method} seed={seed}: test error {err:.4f}")
            except LawqError as exc:
                results.append((method, seed, float("nan")))
                print(f"  {method} seed={seed}: FAILED ({exc})", file=sys.stderr)

    lines = ["method,seed,final_test_error,mean,std"]
    for method in methods:
        errs = np.array([e for m, _, e in results if m == method and not np.isnan(e)])
        mean = float(np.mean(errs)) if errs.size else float("nan")
        std = float(np.std(errs)) if errs.size else float("nan")
        for m, seed, err in results:
            if m == method:
                lines.append(f"{method},{seed},{float(err)!r},{mean!r},{std!r}")
    dataio.atomic_write_text(os.path.join(args.out, "summary.csv"), "\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# export-hist
# ---------------------------------------------------------------------------

def cmd_export_hist(args) -> int:
    blob = dataio.read_blob_file(args.input)
    names = [rec.name for rec in blob.records]
    match = [rec for rec in blob.records if rec.name == args.layer]
    if not match:
        print(f"error: layer {args.layer!r} not found; blob has: {', '.join(names)}",
              file=sys.stderr)
        return DOMAIN_ERROR
    rec = match[0]
    if isinstance(rec, dataio.FullRecord):
        rows = dataio.export_histogram(rec.values, args.bins)
    else:
        rows = dataio.export_histogram(rec)
    dataio.atomic_write_text(args.out, dataio.histogram_csv(rows))
    print(f"wrote {len(rows)} histogram row(s) -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
