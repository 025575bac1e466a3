"""Shared oracles for the test modules."""
import numpy as np

from mpvae.core_math import RngStreams
from mpvae.model import forward, total_loss


def loss_at(params, x, y, seed=0):
    trace = forward(params, x, y, RngStreams(seed))
    return total_loss(params, trace, grad=False)[0]


def analytic_grads(params, x, y, seed=0):
    trace = forward(params, x, y, RngStreams(seed))
    return total_loss(params, trace)[2]


def gradient_errors(params, x, y, n_coords=6, n_dirs=2, h=1e-6, seed=0):
    """Relative errors of analytic vs central-difference gradients, per block.

    Each block is probed along random unit directions and at a few random
    coordinates.  The randomness inside the loss is frozen by reseeding the
    streams on every evaluation.
    """
    grads = analytic_grads(params, x, y, seed)
    arrays = params.arrays()
    probe = np.random.default_rng(99)
    worst = {}
    for name, arr in arrays.items():
        g = grads[name]
        errs = []
        dirs = [probe.standard_normal(arr.shape) for _ in range(n_dirs)]
        for idx in probe.choice(arr.size, size=min(n_coords, arr.size), replace=False):
            e = np.zeros(arr.shape)
            e.flat[idx] = 1.0
            dirs.append(e)
        for v in dirs:
            v = v / np.linalg.norm(v)
            old = arr.copy()
            arr += h * v
            up = loss_at(params, x, y, seed)
            arr[...] = old - h * v
            dn = loss_at(params, x, y, seed)
            arr[...] = old
            fd = (up - dn) / (2 * h)
            an = float((g * v).sum())
            errs.append(abs(an - fd) / max(abs(an), abs(fd), 1e-7))
        worst[name] = max(errs)
    return worst


def brute_force_metrics(Y, Y_hat, P=None, ks=()):
    """Pure-python counting reference for every metric."""
    n, L = len(Y), len(Y[0])

    def f1(tp, fp, fn):
        return 0.0 if 2 * tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)

    ex = []
    for i in range(n):
        tp = sum(1 for j in range(L) if Y[i][j] and Y_hat[i][j])
        fp = sum(1 for j in range(L) if not Y[i][j] and Y_hat[i][j])
        fn = sum(1 for j in range(L) if Y[i][j] and not Y_hat[i][j])
        ex.append(f1(tp, fp, fn))
    per_label = []
    TP = FP = FN = 0
    for j in range(L):
        tp = sum(1 for i in range(n) if Y[i][j] and Y_hat[i][j])
        fp = sum(1 for i in range(n) if not Y[i][j] and Y_hat[i][j])
        fn = sum(1 for i in range(n) if Y[i][j] and not Y_hat[i][j])
        per_label.append(f1(tp, fp, fn))
        TP, FP, FN = TP + tp, FP + fp, FN + fn
    out = {
        "example_f1": sum(ex) / n,
        "micro_f1": f1(TP, FP, FN),
        "macro_f1": sum(per_label) / L,
        "hamming_accuracy": sum(1 for i in range(n) for j in range(L) if Y[i][j] == Y_hat[i][j]) / (n * L),
    }
    for k in ks:
        hits = 0.0
        for i in range(n):
            order = sorted(range(L), key=lambda j: (-P[i][j], j))
            hits += sum(Y[i][j] for j in order[:k]) / k
        out[f"p@{k}"] = hits / n
    return out
