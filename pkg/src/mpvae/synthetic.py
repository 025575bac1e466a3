"""Generators for datasets with a known ground truth."""
from __future__ import annotations

import numpy as np

from .core_math import make_rng
from .data import MultiLabelDataset, split_dataset


def probit_dataset(
    n: int,
    sigma: np.ndarray,
    n_features_per_label: int = 2,
    signal_var: float = 0.15,
    tied_means=(),
    seed: int = 0,
) -> MultiLabelDataset:
    """Sample a multivariate probit dataset.

    ``x ~ N(0, I)``; label ``i`` has latent mean ``m_i = w_i . x`` over its own
    block of features, scaled so ``var(m_i) = signal_var``; then
    ``y* ~ N(m, sigma)`` and ``y = 1[y* > 0]``.  Label correlations come only
    from ``sigma``, unless ``tied_means`` lists ``(i, j, sign)`` triples, in
    which case label ``j`` reuses label ``i``'s mean times ``sign``.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    L = sigma.shape[0]
    S = L * n_features_per_label
    rng = make_rng(seed, "init")
    W = np.zeros((S, L))
    for i in range(L):
        w = rng.standard_normal(n_features_per_label)
        W[i * n_features_per_label : (i + 1) * n_features_per_label, i] = w * np.sqrt(signal_var) / np.linalg.norm(w)
    for i, j, sign in tied_means:
        W[:, j] = sign * W[:, i]
    X = rng.standard_normal((n, S))
    noise = rng.standard_normal((n, L)) @ np.linalg.cholesky(sigma).T
    Y = (X @ W + noise > 0).astype(np.float64)
    ds = MultiLabelDataset(
        "probit-synthetic",
        X,
        Y,
        [f"x{j}" for j in range(S)],
        [f"y{i}" for i in range(L)],
    )
    return split_dataset(ds, seed=seed)


def separable_dataset(n: int = 200, n_features: int = 4, seed: int = 0) -> MultiLabelDataset:
    """Two mutually exclusive labels split by a hyperplane with a margin."""
    rng = make_rng(seed, "init")
    w = rng.standard_normal(n_features)
    w /= np.linalg.norm(w)
    X = rng.standard_normal((n, n_features))
    score = X @ w
    # push points off the boundary to guarantee a margin of 0.5
    X += np.outer(np.sign(score) * 0.5, w)
    pos = (X @ w > 0).astype(np.float64)
    Y = np.stack([pos, 1.0 - pos], axis=1)
    ds = MultiLabelDataset("separable", X, Y, [f"x{j}" for j in range(n_features)], ["a", "b"])
    return split_dataset(ds, seed=seed)
