"""Multivariate Probit head.

The global label covariance is ``Sigma_g = I + Sigma_r`` with
``Sigma_r = B B^T`` for an unconstrained square factor ``B``.  Drawing
``s = m + B eps`` is both the reparameterization and the PSD guarantee,
and ``P(y*_i >= 0) = E_s[Phi(s_i)]`` is estimated by averaging over the
draws.

Arrays of means may be a single vector ``(L,)`` or a batch ``(n, L)``;
sample arrays carry an extra draw axis just before the label axis, so a
batch gives ``s`` of shape ``(n, M, L)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_math import ShapeError, sample_std_normal, std_normal_cdf, std_normal_pdf

PROB_CLAMP = 1e-12


@dataclass
class CovFactor:
    B: np.ndarray

    @property
    def n_labels(self) -> int:
        return self.B.shape[0]

    @property
    def sigma_r(self) -> np.ndarray:
        return self.B @ self.B.T

    @property
    def sigma_g(self) -> np.ndarray:
        return self.sigma_r + np.eye(self.n_labels)

    @classmethod
    def init(cls, n_labels: int, rng, std: float = 0.01) -> "CovFactor":
        return cls(rng.standard_normal((n_labels, n_labels)) * std)

    @classmethod
    def zeros(cls, n_labels: int) -> "CovFactor":
        return cls(np.zeros((n_labels, n_labels)))


@dataclass
class MpSampleBatch:
    s: np.ndarray
    phi_s: np.ndarray
    eps: np.ndarray

    @property
    def n_draws(self) -> int:
        return self.s.shape[-2]


def draw_mp_samples(m, cov: CovFactor, n_draws: int, rng=None, eps=None) -> MpSampleBatch:
    """Draw ``s^k = m + B eps^k`` and evaluate ``Phi`` on every coordinate."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape[-1] != cov.n_labels:
        raise ShapeError(f"means have {m.shape[-1]} labels, covariance factor has {cov.n_labels}")
    if eps is None:
        if n_draws < 1:
            raise ValueError(f"need at least one draw, got {n_draws}")
        eps = sample_std_normal(rng, m.shape[:-1] + (n_draws, m.shape[-1]))
    s = m[..., None, :] + eps @ cov.B.T
    return MpSampleBatch(s, std_normal_cdf(s), eps)


def presence_probabilities(batch: MpSampleBatch) -> np.ndarray:
    return batch.phi_s.mean(axis=-2)


def mp_backward(batch: MpSampleBatch, d_s) -> tuple:
    """Chain a gradient on ``s`` back to the means and to ``B``."""
    d_m = d_s.sum(axis=-2)
    L = d_s.shape[-1]
    d_B = d_s.reshape(-1, L).T @ batch.eps.reshape(-1, L)
    return d_m, d_B


def _log_probs(s) -> tuple:
    p = std_normal_cdf(s)
    q = std_normal_cdf(-s)  # 1 - Phi(s) without cancellation
    hi = 1.0 - PROB_CLAMP
    p_ok = (p >= PROB_CLAMP) & (p <= hi)
    q_ok = (q >= PROB_CLAMP) & (q <= hi)
    p = np.clip(p, PROB_CLAMP, hi)
    q = np.clip(q, PROB_CLAMP, hi)
    return p, q, p_ok, q_ok


def bce_loss(y, batch: MpSampleBatch, grad: bool = False):
    """Monte-Carlo negative log-likelihood of ``y`` under the probit model.

    ``-log (1/M) sum_k prod_i Phi(s_ik)^y_i (1 - Phi(s_ik))^(1 - y_i)``,
    computed in log space with a log-sum-exp over the draws.  Returns the
    per-row loss, plus the gradient w.r.t. ``s`` when ``grad`` is set.
    """
    y = np.asarray(y, dtype=np.float64)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0/1")
    s = batch.s
    y = y[..., None, :]
    p, q, p_ok, q_ok = _log_probs(s)
    ll = (y * np.log(p) + (1.0 - y) * np.log(q)).sum(axis=-1)
    M = s.shape[-2]
    top = ll.max(axis=-1, keepdims=True)
    w = np.exp(ll - top)
    total = w.sum(axis=-1, keepdims=True)
    loss = -(np.log(total) + top)[..., 0] + math.log(M)
    if not grad:
        return loss
    w = w / total
    pdf = std_normal_pdf(s)
    d_ll_d_s = y * np.where(p_ok, pdf / p, 0.0) - (1.0 - y) * np.where(q_ok, pdf / q, 0.0)
    return loss, -w[..., None] * d_ll_d_s


def ranking_loss(y, batch: MpSampleBatch, grad: bool = False):
    """Mean over draws of ``exp(-(Phi(s_i) - Phi(s_j)))`` across (pos, neg) pairs.

    The pair sum factorizes as ``(sum_pos e^-Phi) (sum_neg e^Phi)``.  Rows
    with no positive or no negative label contribute 0.
    """
    y = np.asarray(y, dtype=np.float64)
    phi = batch.phi_s
    M = phi.shape[-2]
    n_pos = y.sum(axis=-1)
    n_neg = y.shape[-1] - n_pos
    pairs = n_pos * n_neg
    norm = np.where(pairs > 0, 1.0 / np.maximum(pairs, 1.0), 0.0)
    y = y[..., None, :]
    e_neg = np.exp(-phi) * y
    e_pos = np.exp(phi) * (1.0 - y)
    s_pos = e_neg.sum(axis=-1)
    s_neg = e_pos.sum(axis=-1)
    loss = (s_pos * s_neg).mean(axis=-1) * norm
    if not grad:
        return loss
    scale = (norm / M)[..., None, None]
    d_phi = scale * (-e_neg * s_neg[..., None] + e_pos * s_pos[..., None])
    return loss, d_phi * std_normal_pdf(batch.s)


def entropy_loss(batch: MpSampleBatch, grad: bool = False):
    """Mean over draws of the entropy of ``softmax(Phi(s))`` across labels."""
    phi = batch.phi_s
    M = phi.shape[-2]
    z = phi - phi.max(axis=-1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    p = np.exp(log_p)
    h = -(p * log_p).sum(axis=-1)
    loss = h.mean(axis=-1)
    if not grad:
        return loss
    d_phi = -p * (log_p + h[..., None]) / M
    return loss, d_phi * std_normal_pdf(batch.s)


def threshold_predict(probs, tau: float) -> np.ndarray:
    """1 where the probability is strictly above ``tau``."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {tau}")
    return (np.asarray(probs) > tau).astype(np.int64)
