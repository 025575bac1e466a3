"""Reading label structure out of the learned covariance.

Factor ``Sigma_g = V V^T`` (Cholesky); row ``i`` of ``V`` is an embedding of
label ``i`` whose inner products reproduce ``Sigma_g``.  Rows are exported
as CSV for external t-SNE and projected to 2-D by PCA in-house.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .model import ModelParams

RECOVERY_MIN_CORR = 0.3


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


def cholesky_lower(sigma, pivot_tol: float = 1e-12) -> np.ndarray:
    """Lower-triangular ``V`` with ``V V^T = sigma`` (Cholesky-Banachiewicz)."""
    a = np.asarray(sigma, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"need a square matrix, got shape {a.shape}")
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-9:
        raise ValueError("matrix is not symmetric")
    n = a.shape[0]
    V = np.zeros_like(a)
    for i in range(n):
        for j in range(i + 1):
            acc = a[i, j] - V[i, :j] @ V[j, :j]
            if i == j:
                if acc <= pivot_tol:
                    raise NotPositiveDefinite(f"pivot {acc:.3e} at index {i} is not positive")
                V[i, i] = math.sqrt(acc)
            else:
                V[i, j] = acc / V[j, j]
    return V


@dataclass
class LabelEmbeddings:
    V: np.ndarray
    label_names: list

    @property
    def sigma_g(self) -> np.ndarray:
        return self.V @ self.V.T


def export_embeddings(params: ModelParams, label_names=None) -> LabelEmbeddings:
    names = list(label_names) if label_names is not None else [str(i) for i in range(params.n_labels)]
    if len(names) != params.n_labels:
        raise ValueError(f"{len(names)} label names for {params.n_labels} labels")
    return LabelEmbeddings(cholesky_lower(params.cov.sigma_g), names)


def project_2d(E: LabelEmbeddings) -> tuple:
    """Top-2 principal-component coordinates of the embedding rows.

    Each component's sign is fixed so its largest-magnitude loading is
    positive.  Returns ``(coords (L, 2), share of variance captured)``.
    """
    rows = np.asarray(E.V, dtype=np.float64)
    if rows.shape[0] < 2:
        raise ValueError("projection needs at least two labels")
    centered = rows - rows.mean(axis=0)
    evals, evecs = np.linalg.eigh(centered.T @ centered)
    order = np.argsort(evals)[::-1]
    evals, evecs = np.clip(evals[order], 0.0, None), evecs[:, order]
    comps = evecs[:, :2]
    if comps.shape[1] < 2:
        comps = np.pad(comps, ((0, 0), (0, 2 - comps.shape[1])))
    for c in range(2):
        k = np.argmax(np.abs(comps[:, c]))
        if comps[k, c] < 0:
            comps[:, c] = -comps[:, c]
    total = evals.sum()
    share = float(evals[:2].sum() / total) if total > 0 else 1.0
    return centered @ comps, share


def correlation_recovery_score(E, corr, min_corr: float = RECOVERY_MIN_CORR) -> float:
    """Fraction of strongly correlated label pairs whose covariance sign agrees.

    A pair qualifies when ``|corr_ij| > min_corr``; it counts as recovered
    when ``sign(Sigma_g[i, j]) == sign(corr_ij)``.  With no qualifying pair
    the score is 1.0.  ``E`` may be a ``LabelEmbeddings`` or ``Sigma_g`` itself.
    """
    sigma = E.sigma_g if isinstance(E, LabelEmbeddings) else np.asarray(E, dtype=np.float64)
    corr = np.asarray(corr, dtype=np.float64)
    if sigma.shape != corr.shape:
        raise ValueError(f"covariance is {sigma.shape}, correlation is {corr.shape}")
    iu = np.triu_indices(sigma.shape[0], k=1)
    c, s = corr[iu], sigma[iu]
    pick = np.abs(c) > min_corr
    if not pick.any():
        return 1.0
    return float(np.mean(np.sign(s[pick]) == np.sign(c[pick])))


def _fmt(v) -> str:
    return repr(float(v))


def _matrix_csv(first: str, columns: list, names: list, M) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([first, *columns])
    for name, row in zip(names, M):
        w.writerow([name, *(_fmt(v) for v in row)])
    return buf.getvalue()


def embeddings_csv(E: LabelEmbeddings) -> str:
    L = len(E.label_names)
    return _matrix_csv("label", [f"v_{k + 1}" for k in range(L)], E.label_names, E.V)


def inner_products_csv(E: LabelEmbeddings) -> str:
    return _matrix_csv("label", list(E.label_names), E.label_names, E.sigma_g)


def projection_csv(E: LabelEmbeddings) -> str:
    coords, _ = project_2d(E)
    return _matrix_csv("label", ["pc1", "pc2"], E.label_names, coords)


def read_matrix_csv(text: str) -> tuple:
    """Parse any of the CSVs above into ``(label_names, matrix)``."""
    rows = list(csv.reader(io.StringIO(text)))
    names = [r[0] for r in rows[1:]]
    M = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    return names, M
