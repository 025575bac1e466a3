"""The two-branch model: encoders, shared decoder, probit head, total loss."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import nn
from .core_math import RngStreams, ShapeError, hstack
from .latent import (
    Branch,
    GaussianParams,
    LatentSample,
    check_binary,
    encode_features,
    encode_labels,
    encoder_backward,
    kl_alignment,
    kl_alignment_grad,
    reparam_backward,
    reparam_sample,
)
from .nn import MlpParams, Tape, init_mlp, mlp_backward, mlp_forward, zero_mlp
from .probit import (
    CovFactor,
    MpSampleBatch,
    bce_loss,
    draw_mp_samples,
    entropy_loss,
    mp_backward,
    presence_probabilities,
    ranking_loss,
    threshold_predict,
)


@dataclass
class Hyper:
    beta: float = 1.1
    lambda1: float = 0.5
    lambda2: float = 10.0
    lambda3: float = 0.5
    sparse_labels: bool = False
    dropout: float = 0.5
    latent_dim: int = 64
    m_train: int = 40
    m_eval: int = 200
    tau: float = 0.5
    hidden: tuple = nn.HIDDEN

    @property
    def entropy_weight(self) -> float:
        """lambda3, or 0 when the sparse-label switch is off."""
        return self.lambda3 if self.sparse_labels else 0.0

    def validate(self) -> "Hyper":
        for name in ("beta", "lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.latent_dim < 1 or self.m_train < 1 or self.m_eval < 1:
            raise ValueError("latent_dim, m_train and m_eval must be >= 1")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must be in (0, 1)")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Hyper":
        known = {f.name for f in fields(cls)}
        kw = {k: v for k, v in d.items() if k in known}
        if "hidden" in kw:
            kw["hidden"] = tuple(kw["hidden"])
        return cls(**kw)


@dataclass
class ModelParams:
    psi: MlpParams  # feature encoder, S -> 2d
    phi: MlpParams  # label encoder, L + S -> 2d
    theta: MlpParams  # decoder, d + S -> L
    cov: CovFactor
    hyper: Hyper = field(default_factory=Hyper)
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None

    @property
    def n_features(self) -> int:
        return self.psi.n_in

    @property
    def n_labels(self) -> int:
        return self.theta.n_out

    @property
    def latent_dim(self) -> int:
        return self.psi.n_out // 2

    def arrays(self) -> dict:
        """Trainable blocks by name; the arrays are shared, not copied."""
        out = {}
        out.update(self.psi.arrays("psi."))
        out.update(self.phi.arrays("phi."))
        out.update(self.theta.arrays("theta."))
        out["B"] = self.cov.B
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.psi.copy(),
            self.phi.copy(),
            self.theta.copy(),
            CovFactor(self.cov.B.copy()),
            Hyper.from_dict(self.hyper.to_dict()),
            None if self.feature_mean is None else self.feature_mean.copy(),
            None if self.feature_std is None else self.feature_std.copy(),
        )


def init_params(n_features: int, n_labels: int, hyper: Hyper, rng) -> ModelParams:
    d = hyper.latent_dim
    h = tuple(hyper.hidden)
    psi = init_mlp(n_features, 2 * d, rng, h)
    phi = init_mlp(n_labels + n_features, 2 * d, rng, h)
    theta = init_mlp(d + n_features, n_labels, rng, h)
    return ModelParams(psi, phi, theta, CovFactor.init(n_labels, rng), hyper.validate())


def zero_params(n_features: int, n_labels: int, hyper: Hyper) -> ModelParams:
    d = hyper.latent_dim
    h = tuple(hyper.hidden)
    return ModelParams(
        zero_mlp(n_features, 2 * d, h),
        zero_mlp(n_labels + n_features, 2 * d, h),
        zero_mlp(d + n_features, n_labels, h),
        CovFactor.zeros(n_labels),
        hyper.validate(),
    )


@dataclass
class BranchTrace:
    q: GaussianParams
    sample: LatentSample
    dec_tape: Tape
    m: np.ndarray
    mp: MpSampleBatch


@dataclass
class ForwardTrace:
    x: np.ndarray
    y: np.ndarray
    feature: BranchTrace
    label: BranchTrace


def _decode(params: ModelParams, z, x, rngs, train_mode):
    return mlp_forward(params.theta, hstack(z, x), params.hyper.dropout, rngs.dropout if train_mode else None, train_mode)


def forward(params: ModelParams, x, y, rngs: RngStreams, train_mode: bool = True, n_draws: int | None = None) -> ForwardTrace:
    """Run both branches on a batch (rows of ``x`` and ``y``).

    Each branch draws one latent sample per row and ``n_draws`` probit
    draws (``m_train`` by default).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(check_binary(y))
    if x.shape[1] != params.n_features or y.shape[1] != params.n_labels or x.shape[0] != y.shape[0]:
        raise ShapeError(f"batch shapes x{x.shape}, y{y.shape} do not match model (S={params.n_features}, L={params.n_labels})")
    h = params.hyper
    M = h.m_train if n_draws is None else n_draws
    drop_rng = rngs.dropout if train_mode else None

    branches = []
    for source in (Branch.FEATURE, Branch.LABEL):
        if source is Branch.FEATURE:
            q = encode_features(params.psi, x, h.dropout, drop_rng, train_mode)
        else:
            q = encode_labels(params.phi, y, x, h.dropout, drop_rng, train_mode)
        sample = reparam_sample(q, rngs.latent, source)
        m, tape = _decode(params, sample.z, x, rngs, train_mode)
        mp = draw_mp_samples(m, params.cov, M, rngs.mp)
        branches.append(BranchTrace(q, sample, tape, m, mp))
    return ForwardTrace(x, y, branches[0], branches[1])


def _branch_losses(h: Hyper, y, mp: MpSampleBatch, grad: bool):
    lam3 = h.entropy_weight
    n = y.shape[0]
    terms = {}
    d_s = np.zeros_like(mp.s) if grad else None
    for name, lam, fn in (
        ("bce", h.lambda1, lambda g: bce_loss(y, mp, grad=g)),
        ("ranking", h.lambda2, lambda g: ranking_loss(y, mp, grad=g)),
        ("entropy", lam3, lambda g: entropy_loss(mp, grad=g)),
    ):
        if lam == 0.0:
            terms[name] = 0.0
            continue
        if grad:
            val, ds = fn(True)
            d_s += (lam / n) * ds
        else:
            val = fn(False)
        terms[name] = float(np.mean(val))
    return terms, d_s


def total_loss(params: ModelParams, trace: ForwardTrace, y=None, grad: bool = True):
    """Mean over batch rows of ``L_recon + L_prior + beta * KL``.

    ``L_recon`` is computed on the label branch, ``L_prior`` on the feature
    branch, each as ``lambda1 * bce + lambda2 * ranking + lambda3 * entropy``.
    Returns ``(loss, terms, grads)``; ``grads`` maps the names of
    ``params.arrays()`` to gradient arrays and is ``None`` when ``grad`` is off.
    """
    h = params.hyper
    y = trace.y if y is None else np.atleast_2d(np.asarray(y, dtype=np.float64))
    n = y.shape[0]
    fb, lb = trace.feature, trace.label

    prior, d_s_x = _branch_losses(h, y, fb.mp, grad)
    recon, d_s_y = _branch_losses(h, y, lb.mp, grad)
    kl = float(np.mean(kl_alignment(lb.q, fb.q)))
    loss = (
        h.lambda1 * (prior["bce"] + recon["bce"])
        + h.lambda2 * (prior["ranking"] + recon["ranking"])
        + h.entropy_weight * (prior["entropy"] + recon["entropy"])
        + h.beta * kl
    )
    terms = {
        "prior_bce": prior["bce"],
        "prior_ranking": prior["ranking"],
        "prior_entropy": prior["entropy"],
        "recon_bce": recon["bce"],
        "recon_ranking": recon["ranking"],
        "recon_entropy": recon["entropy"],
        "kl": kl,
    }
    if not math.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss}: {terms}")
    if not grad:
        return loss, terms, None

    d = params.latent_dim
    grads = {}
    d_mu_l, d_lv_l, d_mu_f, d_lv_f = kl_alignment_grad(lb.q, fb.q)
    k = h.beta / n
    enc = {Branch.FEATURE: (k * d_mu_f, k * d_lv_f), Branch.LABEL: (k * d_mu_l, k * d_lv_l)}

    d_B = np.zeros_like(params.cov.B)
    theta_g = None
    for br, d_s in ((fb, d_s_x), (lb, d_s_y)):
        d_m, d_b = mp_backward(br.mp, d_s)
        d_B += d_b
        g, d_in = mlp_backward(br.dec_tape, d_m)
        theta_g = g if theta_g is None else theta_g + g
        d_mu, d_lv = reparam_backward(br.q, br.sample, d_in[:, :d])
        e_mu, e_lv = enc[br.sample.source]
        enc[br.sample.source] = (e_mu + d_mu, e_lv + d_lv)

    psi_g, _ = encoder_backward(fb.q, *enc[Branch.FEATURE])
    phi_g, _ = encoder_backward(lb.q, *enc[Branch.LABEL])
    grads.update(psi_g.arrays("psi."))
    grads.update(phi_g.arrays("phi."))
    grads.update(theta_g.arrays("theta."))
    grads["B"] = d_B
    return loss, terms, grads


def predict_proba(params: ModelParams, x, rng, n_draws: int | None = None) -> np.ndarray:
    """Presence probabilities from the feature branch in eval mode.

    The latent code is the feature encoder's mean; the probit head averages
    ``m_eval`` draws.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.n_features:
        raise ShapeError(f"features have {x.shape[1]} columns, model expects {params.n_features}")
    q = encode_features(params.psi, x)
    m, _ = mlp_forward(params.theta, hstack(q.mu, x))
    M = params.hyper.m_eval if n_draws is None else n_draws
    return presence_probabilities(draw_mp_samples(m, params.cov, M, rng))


def predict(params: ModelParams, x, rng, tau: float | None = None) -> tuple:
    """Return ``(probs, y_hat)`` thresholded at ``tau`` (the model's own by default)."""
    probs = predict_proba(params, x, rng)
    return probs, threshold_predict(probs, params.hyper.tau if tau is None else tau)


def save_checkpoint(path, params: ModelParams, extra: dict | None = None) -> None:
    arrays = dict(params.arrays())
    if params.feature_mean is not None:
        arrays["norm.mean"] = params.feature_mean
        arrays["norm.std"] = params.feature_std
    header = {
        "n_features": params.n_features,
        "n_labels": params.n_labels,
        "latent_dim": params.latent_dim,
        "hyper": params.hyper.to_dict(),
        **(extra or {}),
    }
    nn.save_arrays(path, arrays, header)


def load_checkpoint(path) -> tuple:
    """Return ``(params, header)``."""
    arrays, header = nn.load_arrays(path)
    params = ModelParams(
        MlpParams.from_arrays(arrays, "psi."),
        MlpParams.from_arrays(arrays, "phi."),
        MlpParams.from_arrays(arrays, "theta."),
        CovFactor(np.array(arrays["B"], dtype=np.float64)),
        Hyper.from_dict(header["hyper"]),
        arrays.get("norm.mean"),
        arrays.get("norm.std"),
    )
    if (params.n_features, params.n_labels, params.latent_dim) != (
        header["n_features"],
        header["n_labels"],
        header["latent_dim"],
    ):
        raise ValueError(f"checkpoint {path} has inconsistent shapes")
    return params, header
