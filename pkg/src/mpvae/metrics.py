"""Example-, micro- and macro-F1, Hamming accuracy and Precision@K.

Empty-support conventions: a sample (example-F1) or label (macro-F1) whose
F1 denominator is zero contributes 0, and a zero pooled denominator makes
micro-F1 0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


def _pair(Y, Y_hat) -> tuple:
    Y = np.asarray(Y)
    Y_hat = np.asarray(Y_hat)
    if Y.shape != Y_hat.shape or Y.ndim != 2:
        raise ValueError(f"label matrices must share a 2-D shape, got {Y.shape} and {Y_hat.shape}")
    for m, what in ((Y, "Y"), (Y_hat, "Y_hat")):
        if not np.all((m == 0) | (m == 1)):
            raise ValueError(f"{what} has non-binary entries")
    return Y.astype(np.float64), Y_hat.astype(np.float64)


def _safe_ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def example_f1(Y, Y_hat) -> float:
    Y, Y_hat = _pair(Y, Y_hat)
    tp = (Y * Y_hat).sum(axis=1)
    return float(np.mean(_safe_ratio(2 * tp, Y.sum(axis=1) + Y_hat.sum(axis=1))))


def micro_f1(Y, Y_hat) -> float:
    Y, Y_hat = _pair(Y, Y_hat)
    tp = (Y * Y_hat).sum()
    fp = ((1 - Y) * Y_hat).sum()
    fn = (Y * (1 - Y_hat)).sum()
    return float(_safe_ratio(2 * tp, 2 * tp + fp + fn))


def macro_f1(Y, Y_hat) -> float:
    Y, Y_hat = _pair(Y, Y_hat)
    tp = (Y * Y_hat).sum(axis=0)
    fp = ((1 - Y) * Y_hat).sum(axis=0)
    fn = (Y * (1 - Y_hat)).sum(axis=0)
    return float(np.mean(_safe_ratio(2 * tp, 2 * tp + fp + fn)))


def hamming_accuracy(Y, Y_hat) -> float:
    Y, Y_hat = _pair(Y, Y_hat)
    return float(np.mean(Y == Y_hat))


def precision_at_k(Y, P, k: int) -> float:
    """Mean fraction of true labels among each row's ``k`` most probable.

    Ties go to the lower label index.
    """
    Y = np.asarray(Y, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    if Y.shape != P.shape or Y.ndim != 2:
        raise ValueError(f"label and probability matrices must share a 2-D shape, got {Y.shape} and {P.shape}")
    if not 1 <= k <= Y.shape[1]:
        raise ValueError(f"K must be in [1, {Y.shape[1]}], got {k}")
    # stable sort on -P keeps lower indices first among equal probabilities
    top = np.argsort(-P, axis=1, kind="stable")[:, :k]
    return float(np.mean(np.take_along_axis(Y, top, axis=1).sum(axis=1) / k))


@dataclass
class EvalReport:
    example_f1: float
    micro_f1: float
    macro_f1: float
    hamming_accuracy: float
    precision_at_k: dict = field(default_factory=dict)
    n_test: int = 0
    tau: float = 0.5

    def to_dict(self) -> dict:
        return {
            "example_f1": self.example_f1,
            "hamming_accuracy": self.hamming_accuracy,
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "n_test": self.n_test,
            "precision_at_k": {str(k): v for k, v in sorted(self.precision_at_k.items())},
            "tau": self.tau,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        d["precision_at_k"] = {int(k): v for k, v in d["precision_at_k"].items()}
        return cls(**d)


def evaluate(Y, P, tau: float, ks=()) -> EvalReport:
    """Every metric for probabilities ``P`` thresholded strictly above ``tau``."""
    Y_hat = (np.asarray(P) > tau).astype(np.int64)
    L = np.shape(Y)[1]
    return EvalReport(
        example_f1=example_f1(Y, Y_hat),
        micro_f1=micro_f1(Y, Y_hat),
        macro_f1=macro_f1(Y, Y_hat),
        hamming_accuracy=hamming_accuracy(Y, Y_hat),
        precision_at_k={int(k): precision_at_k(Y, P, int(k)) for k in ks if 1 <= int(k) <= L},
        n_test=int(np.shape(Y)[0]),
        tau=float(tau),
    )
