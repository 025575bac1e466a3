"""Feature and label encoders, reparameterized sampling, KL alignment."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .core_math import ShapeError, hstack, sample_std_normal
from .nn import MlpGrads, MlpParams, Tape, mlp_backward, mlp_forward

LOG_VAR_MIN = -10.0
LOG_VAR_MAX = 10.0


class Branch(enum.Enum):
    FEATURE = "feature_branch"
    LABEL = "label_branch"


@dataclass
class GaussianParams:
    """Diagonal Gaussian per row: mean and clamped log-variance, both (n, d)."""

    mu: np.ndarray
    log_var: np.ndarray
    raw_log_var: np.ndarray | None = field(default=None, repr=False)
    tape: Tape | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.mu.shape[-1]

    @property
    def var(self) -> np.ndarray:
        return np.exp(self.log_var)


@dataclass
class LatentSample:
    z: np.ndarray
    eps: np.ndarray
    source: Branch


def check_binary(y, what: str = "labels") -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError(f"{what} must be 0/1")
    return y


def _as_batch(v) -> tuple:
    v = np.asarray(v, dtype=np.float64)
    return (v[None, :], True) if v.ndim == 1 else (v, False)


def _split(out: np.ndarray, tape: Tape, squeeze: bool) -> GaussianParams:
    d = out.shape[1] // 2
    mu = out[:, :d]
    raw = out[:, d:]
    lv = np.clip(raw, LOG_VAR_MIN, LOG_VAR_MAX)
    if squeeze:
        return GaussianParams(mu[0], lv[0], raw[0], tape)
    return GaussianParams(mu, lv, raw, tape)


def encode_features(psi: MlpParams, x, dropout: float = 0.0, rng=None, train_mode: bool = False) -> GaussianParams:
    """q(z | x): MLP output of width 2d split into (mu, log_var)."""
    xb, squeeze = _as_batch(x)
    if xb.shape[1] != psi.n_in:
        raise ShapeError(f"feature vector has length {xb.shape[1]}, encoder expects {psi.n_in}")
    out, tape = mlp_forward(psi, xb, dropout, rng, train_mode)
    return _split(out, tape, squeeze)


def encode_labels(phi: MlpParams, y, x, dropout: float = 0.0, rng=None, train_mode: bool = False) -> GaussianParams:
    """q(z | y, x): the encoder reads the concatenation ``[y ; x]``."""
    yb, squeeze = _as_batch(y)
    xb, _ = _as_batch(x)
    check_binary(yb)
    inp = hstack(yb, xb)
    if inp.shape[1] != phi.n_in:
        raise ShapeError(f"label+feature input has length {inp.shape[1]}, encoder expects {phi.n_in}")
    out, tape = mlp_forward(phi, inp, dropout, rng, train_mode)
    return _split(out, tape, squeeze)


def encoder_backward(g: GaussianParams, d_mu, d_log_var) -> tuple:
    """Push gradients on (mu, log_var) back through the clamp and the MLP."""
    d_raw = np.where((g.raw_log_var >= LOG_VAR_MIN) & (g.raw_log_var <= LOG_VAR_MAX), d_log_var, 0.0)
    grad_out = np.concatenate([np.atleast_2d(d_mu), np.atleast_2d(d_raw)], axis=1)
    return mlp_backward(g.tape, grad_out)


def reparam_sample(g: GaussianParams, rng, source: Branch = Branch.FEATURE, eps=None) -> LatentSample:
    """z = mu + exp(log_var / 2) * eps with eps ~ N(0, I).

    Pass ``eps`` to reuse a fixed draw.
    """
    if eps is None:
        eps = sample_std_normal(rng, g.mu.shape)
    z = g.mu + np.exp(0.5 * g.log_var) * eps
    return LatentSample(z, eps, source)


def reparam_backward(g: GaussianParams, sample: LatentSample, d_z) -> tuple:
    """Gradients of a loss on z w.r.t. (mu, log_var), eps held fixed."""
    d_mu = d_z
    d_log_var = d_z * sample.eps * 0.5 * np.exp(0.5 * g.log_var)
    return d_mu, d_log_var


def kl_alignment(q_label: GaussianParams, q_feature: GaussianParams):
    """KL[q_label || q_feature] between diagonal Gaussians, no beta factor.

    Returns a float for single vectors and one value per row for batches.
    """
    if q_label.mu.shape != q_feature.mu.shape:
        raise ShapeError(f"latent dims differ: {q_label.mu.shape} vs {q_feature.mu.shape}")
    lv_l, lv_f = q_label.log_var, q_feature.log_var
    diff = q_feature.mu - q_label.mu
    terms = lv_f - lv_l - 1.0 + np.exp(lv_l - lv_f) + diff * diff * np.exp(-lv_f)
    kl = 0.5 * terms.sum(axis=-1)
    return float(kl) if np.ndim(kl) == 0 else kl


def kl_alignment_grad(q_label: GaussianParams, q_feature: GaussianParams) -> tuple:
    """Gradients of ``kl_alignment`` (per row) w.r.t. both means and log-variances.

    Returns ``(d_mu_label, d_log_var_label, d_mu_feature, d_log_var_feature)``.
    """
    if q_label.mu.shape != q_feature.mu.shape:
        raise ShapeError(f"latent dims differ: {q_label.mu.shape} vs {q_feature.mu.shape}")
    lv_l, lv_f = q_label.log_var, q_feature.log_var
    diff = q_feature.mu - q_label.mu
    ratio = np.exp(lv_l - lv_f)
    inv_f = np.exp(-lv_f)
    d_mu_f = diff * inv_f
    d_mu_l = -d_mu_f
    d_lv_l = 0.5 * (ratio - 1.0)
    d_lv_f = 0.5 * (1.0 - ratio - diff * diff * inv_f)
    return d_mu_l, d_lv_l, d_mu_f, d_lv_f
