"""Command-line entry point: ``mpvae {train,evaluate,predict,noise-experiment,export-cov}``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .core_math import make_rng
from .data import (
    SPLITS,
    DatasetError,
    apply_normalization,
    load_dataset,
    load_features,
    normalize_features,
    split_dataset,
)
from .interpret import embeddings_csv, export_embeddings, inner_products_csv, projection_csv
from .model import load_checkpoint, predict_proba, save_checkpoint
from .probit import threshold_predict
from .training import evaluate_split, run_noise_experiment, train

log = logging.getLogger("mpvae")


def _prepare(cfg: RunConfig):
    if not cfg.dataset:
        raise DatasetError("no dataset given (set 'dataset' in the config or pass --dataset)")
    if not os.path.isfile(cfg.dataset):
        raise DatasetError(f"dataset file not found: {cfg.dataset}")
    ds = load_dataset(cfg.dataset, cfg.format, n_features=cfg.n_features or None, n_labels=cfg.n_labels or None)
    ds = split_dataset(ds, cfg.split_ratios, cfg.seed)
    return normalize_features(ds) if cfg.normalize else ds


def _write_outputs(out: Path, files: dict) -> None:
    """Write every file or none: stage in a temp dir, then move into place."""
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=out) as tmp:
        staged = []
        for name, content in files.items():
            p = Path(tmp) / name
            if callable(content):
                content(p)
            else:
                p.write_bytes(content.encode("utf-8") if isinstance(content, str) else content)
            staged.append((p, out / name))
        for src, dst in staged:
            os.replace(src, dst)


def _header_extra(cfg: RunConfig, ds) -> dict:
    return {
        "dataset": cfg.dataset,
        "format": cfg.format,
        "seed": cfg.seed,
        "split_ratios": list(cfg.split_ratios),
        "normalize": cfg.normalize,
        "label_names": list(ds.label_names),
        "feature_names": list(ds.feature_names),
    }


def cmd_train(cfg: RunConfig, args) -> int:
    ds = _prepare(cfg)
    params, trail = train(ds, cfg.train_config(), cfg.hyper())
    report = evaluate_split(params, ds, "valid", cfg.k_list, cfg.seed)
    extra = _header_extra(cfg, ds)
    _write_outputs(
        Path(cfg.out),
        {
            "checkpoint.npz": lambda p: save_checkpoint(p, params, extra),
            "train_log.jsonl": trail.to_jsonl(),
            "valid_report.json": report.to_json(),
            "config.conf": cfg.dumps(),
        },
    )
    print(f"validation example-F1 {report.example_f1:.4f} (tau {report.tau:.2f}, best epoch {trail.best_epoch})")
    return 0


def _dataset_for_checkpoint(header: dict, args, cfg: RunConfig):
    path = args.dataset or header["dataset"]
    fmt = args.format or header["format"]
    if not os.path.isfile(path):
        raise DatasetError(f"dataset file not found: {path}")
    ds = load_dataset(path, fmt, n_features=header["n_features"] if fmt == "sparse_svm" else None,
                      n_labels=header["n_labels"] if fmt == "sparse_svm" else None)
    ds = split_dataset(ds, header.get("split_ratios", cfg.split_ratios), header["seed"])
    return ds


def cmd_evaluate(cfg: RunConfig, args) -> int:
    if args.split not in SPLITS:
        raise DatasetError(f"unknown split {args.split!r}; valid names are {', '.join(SPLITS)}")
    params, header = load_checkpoint(args.checkpoint)
    ds = _dataset_for_checkpoint(header, args, cfg)
    ds.X = apply_normalization(ds.X, params.feature_mean, params.feature_std)
    seed = header["seed"] if args.seed is None else args.seed
    report = evaluate_split(params, ds, args.split, args.k or cfg.k_list, seed)
    text = report.to_json()
    if args.out:
        _write_outputs(Path(args.out), {f"{args.split}_report.json": text})
    sys.stdout.write(text)
    return 0


def cmd_predict(cfg: RunConfig, args) -> int:
    params, header = load_checkpoint(args.checkpoint)
    X, _ = load_features(args.features)
    X = apply_normalization(X, params.feature_mean, params.feature_std)
    seed = header["seed"] if args.seed is None else args.seed
    probs = predict_proba(params, X, make_rng(seed, "eval"))
    y_hat = threshold_predict(probs, params.hyper.tau)
    names = header.get("label_names") or [str(i) for i in range(params.n_labels)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"p:{n}" for n in names] + [f"y:{n}" for n in names])
    for p_row, y_row in zip(probs, y_hat):
        w.writerow([repr(float(v)) for v in p_row] + [str(int(v)) for v in y_row])
    if args.out:
        _write_outputs(Path(args.out), {"predictions.csv": buf.getvalue()})
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_noise_experiment(cfg: RunConfig, args) -> int:
    ds = _prepare(cfg)
    rows = run_noise_experiment(ds, cfg.train_config(), cfg.hyper(), cfg.noise_rates, cfg.k_list)
    buf = io.StringIO()
    cols = ["rate", "example_f1", "micro_f1", "macro_f1", "hamming_accuracy", "tau"]
    ks = sorted(rows[0]["precision_at_k"], key=int) if rows else []
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols + [f"p@{k}" for k in ks])
    for r in rows:
        w.writerow([repr(float(r[c])) for c in cols] + [repr(float(r["precision_at_k"][k])) for k in ks])
    _write_outputs(Path(cfg.out), {"noise_table.csv": buf.getvalue(), "config.conf": cfg.dumps()})
    sys.stdout.write(buf.getvalue())
    return 0


def cmd_export_cov(cfg: RunConfig, args) -> int:
    params, header = load_checkpoint(args.checkpoint)
    E = export_embeddings(params, header.get("label_names"))
    _write_outputs(
        Path(args.out or cfg.out),
        {
            "embeddings.csv": embeddings_csv(E),
            "inner_products.csv": inner_products_csv(E),
            "projection.csv": projection_csv(E) if params.n_labels >= 2 else "label,pc1,pc2\n",
        },
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("dense_csv", "sparse_svm"))
    common.add_argument("--dataset", help="dataset file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="mpvae", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train a model and write a checkpoint")
    ev = sub.add_parser("evaluate", parents=[common], help="all metrics on one split")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--split", default="test")
    ev.add_argument("--k", type=int, action="append", help="Precision@K; repeatable")
    pr = sub.add_parser("predict", parents=[common], help="probabilities and 0/1 predictions as CSV")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--features", required=True, help="dense CSV with f: columns")
    ne = sub.add_parser("noise-experiment", parents=[common], help="test metrics under label flipping")
    ne.add_argument("--rates", help="comma-separated flip rates")
    ex = sub.add_parser("export-cov", parents=[common], help="label embeddings from the covariance")
    ex.add_argument("--checkpoint", required=True)
    return ap


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "noise-experiment": cmd_noise_experiment,
    "export-cov": cmd_export_cov,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {}
        for item in args.set:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            overrides[key.strip()] = value
        for key in ("seed", "out", "format", "dataset"):
            if getattr(args, key) is not None:
                overrides[key] = str(getattr(args, key))
        if getattr(args, "rates", None):
            overrides["noise_rates"] = args.rates
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, DatasetError, OSError, ValueError, FloatingPointError) as e:
        print(f"mpvae {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
