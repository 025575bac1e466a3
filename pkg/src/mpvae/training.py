"""Minibatch training with Adam, early stopping and threshold calibration."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core_math import RngStreams, make_rng
from .data import MultiLabelDataset, NoiseSpec, inject_label_noise
from .metrics import EvalReport, evaluate, example_f1
from .model import Hyper, ModelParams, forward, init_params, predict_proba, total_loss
from .nn import AdamState, adam_step

log = logging.getLogger(__name__)

THRESHOLDS = tuple(round(0.05 * i, 2) for i in range(1, 20))


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 128
    max_epochs: int = 200
    lr: float = 1e-3
    lr_decay: float = 0.97
    patience: int = 20
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must be in (0, 1]")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.lr <= 0 or self.max_epochs < 0:
            raise ValueError("lr must be > 0 and max_epochs >= 0")
        return self


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    terms: dict
    valid_example_f1: float
    valid_tau: float
    lr: float
    seconds: float = field(default=0.0, compare=False)

    def to_dict(self, timing: bool = False) -> dict:
        d = dataclasses.asdict(self)
        if not timing:
            del d["seconds"]
        return d


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    best_epoch: int = -1

    def to_jsonl(self, timing: bool = False) -> str:
        """One JSON object per epoch.  Wall-clock is left out unless asked for,
        so identical runs serialize to identical bytes."""
        return "".join(json.dumps(r.to_dict(timing), sort_keys=True) + "\n" for r in self.records)


def best_threshold(probs, Y) -> tuple:
    """``(tau, example_f1)`` over the 19-point grid; ties go to the smaller tau."""
    best_tau, best_f1 = THRESHOLDS[0], -1.0
    for tau in THRESHOLDS:
        f1 = example_f1(Y, (np.asarray(probs) > tau).astype(np.int64))
        if f1 > best_f1:
            best_tau, best_f1 = tau, f1
    return best_tau, best_f1


def calibrate_threshold(params: ModelParams, X_valid, Y_valid, seed: int = 0) -> float:
    if len(X_valid) == 0:
        raise ValueError("threshold calibration needs a non-empty validation split")
    probs = predict_proba(params, X_valid, make_rng(seed, "eval"))
    return best_threshold(probs, Y_valid)[0]


def train(ds: MultiLabelDataset, cfg: TrainConfig, hyper: Hyper | None = None) -> tuple:
    """Fit a model on the train split, keeping the best-validation weights.

    Returns ``(params, log)``.  ``params.hyper.tau`` holds the validation
    calibrated threshold of the kept epoch.
    """
    cfg.validate()
    hyper = (hyper or Hyper()).validate()
    if not ds.has_splits():
        raise ValueError("dataset needs train, valid and test splits")
    X_tr, Y_tr = ds.part("train")
    X_va, Y_va = ds.part("valid")

    rngs = RngStreams(cfg.seed)
    params = init_params(ds.n_features, ds.n_labels, hyper, rngs.init)
    params.feature_mean, params.feature_std = ds.norm_mean, ds.norm_std
    blocks = params.arrays()
    adam = AdamState(lr=cfg.lr)
    trail = TrainLog()
    best, best_f1, stale = params.copy(), -1.0, 0

    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        order = rngs.batches.permutation(len(X_tr))
        sums, n_seen = {}, 0
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            trace = forward(params, X_tr[idx], Y_tr[idx], rngs, train_mode=True)
            try:
                loss, terms, grads = total_loss(params, trace)
            except FloatingPointError as e:
                raise TrainingDiverged(f"epoch {epoch} batch {b}: {e}") from None
            try:
                adam_step(blocks, grads, adam)
            except FloatingPointError as e:
                raise TrainingDiverged(f"epoch {epoch} batch {b}: {e}") from None
            n_seen += len(idx)
            for k, v in (("loss", loss), *terms.items()):
                sums[k] = sums.get(k, 0.0) + v * len(idx)
        lr_used = adam.lr
        adam.lr *= cfg.lr_decay

        probs = predict_proba(params, X_va, make_rng(cfg.seed, "eval"))
        tau, f1 = best_threshold(probs, Y_va)
        mean_terms = {k: v / n_seen for k, v in sums.items()}
        rec = EpochRecord(epoch, mean_terms.pop("loss"), mean_terms, f1, tau, lr_used, time.perf_counter() - t0)
        trail.records.append(rec)
        log.info("epoch %d loss %.4f valid example-F1 %.4f (tau %.2f)", epoch, rec.loss, f1, tau)
        if not math.isfinite(rec.loss):
            raise TrainingDiverged(f"epoch {epoch}: non-finite mean loss")

        if f1 > best_f1:
            best, best_f1, stale = params.copy(), f1, 0
            best.hyper.tau = tau
            trail.best_epoch = epoch
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best, trail


def evaluate_split(params: ModelParams, ds: MultiLabelDataset, split: str = "test", ks=(1, 3, 5), seed: int = 0) -> EvalReport:
    X, Y = ds.part(split)
    probs = predict_proba(params, X, make_rng(seed, "eval"))
    return evaluate(Y, probs, params.hyper.tau, ks)


def run_noise_experiment(ds: MultiLabelDataset, cfg: TrainConfig, hyper: Hyper | None = None, rates=(0.0, 0.1, 0.2, 0.3, 0.4), ks=(1, 3, 5)) -> list:
    """Train one model per flip rate on an independently corrupted copy.

    Returns one row of test metrics per rate.
    """
    rows = []
    for rate in rates:
        noisy = inject_label_noise(ds, NoiseSpec(float(rate), cfg.seed))
        params, _ = train(noisy, cfg, hyper)
        report = evaluate_split(params, noisy, "test", ks, cfg.seed)
        rows.append({"rate": float(rate), **report.to_dict()})
    return rows
