"""Numeric substrate shared by every other module.

Matrices are plain ``float64`` numpy arrays; the helpers here add the shape
and finiteness checks the rest of the package relies on.  Randomness comes
from numpy's PCG64 generator.  A run is seeded once and each purpose
(init, latent draws, MP draws, ...) gets its own stream through
``SeedSequence([seed, purpose_id])``, so changing how many draws one
component consumes never shifts another component's stream.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special

# Stable ids: streams are derived as SeedSequence([seed, id]).  Never renumber.
STREAMS = {
    "init": 1,
    "latent": 2,
    "mp": 3,
    "noise": 4,
    "split": 5,
    "dropout": 6,
    "batches": 7,
    "eval": 8,
}

LOG_2PI = math.log(2.0 * math.pi)


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def make_rng(seed: int, stream: str | None = None) -> np.random.Generator:
    """PCG64 generator for ``seed``, optionally on a named sub-stream."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    entropy = [int(seed)] if stream is None else [int(seed), STREAMS[stream]]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def sample_std_normal(rng: np.random.Generator, n) -> np.ndarray:
    """i.i.d. N(0, 1) draws (numpy's ziggurat transform on PCG64).

    ``n`` may be an int or a shape tuple.
    """
    if isinstance(n, (int, np.integer)) and n < 1:
        raise ValueError(f"need at least one draw, got n={n}")
    return rng.standard_normal(n)


def std_normal_cdf(x):
    """Standard normal CDF.

    Uses the Cephes ``ndtr`` routine (erf/erfc rational approximations,
    relative error around 1e-15 over the float64 range), which is well
    inside the 1e-7 absolute budget.  Works elementwise on arrays.
    """
    return special.ndtr(x)


def std_normal_pdf(x):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-0.5 * x * x - 0.5 * LOG_2PI)


def logsumexp(v, axis=None):
    """log(sum(exp(v))) with the max shifted out.

    Entries may be ``-inf``; an all ``-inf`` input returns ``-inf``.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0 or (axis is not None and v.shape[axis] == 0):
        raise ValueError("empty reduction")
    vmax = np.max(v, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(vmax), vmax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(v - shift), axis=axis, keepdims=True)) + shift
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def check_finite(a, what: str = "array") -> np.ndarray:
    a = np.asarray(a)
    if not np.all(np.isfinite(a)):
        bad = int(np.size(a) - np.count_nonzero(np.isfinite(a)))
        raise NonFiniteError(f"{what} has {bad} non-finite entries")
    return a


def _shape(a) -> tuple:
    return tuple(np.shape(a))


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {_shape(a)} by {_shape(b)}")
    return a @ b


def add(a, b) -> np.ndarray:
    if _shape(a) != _shape(b):
        raise ShapeError(f"cannot add {_shape(a)} and {_shape(b)}")
    return np.asarray(a, dtype=np.float64) + np.asarray(b, dtype=np.float64)


def scale(a, c: float) -> np.ndarray:
    return float(c) * np.asarray(a, dtype=np.float64)


def transpose(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"transpose needs a matrix, got shape {_shape(a)}")
    return np.ascontiguousarray(a.T)


def add_row(a, row) -> np.ndarray:
    """Broadcast-add ``row`` to every row of ``a``."""
    a = np.asarray(a, dtype=np.float64)
    row = np.asarray(row, dtype=np.float64)
    if a.ndim != 2 or row.shape != (a.shape[1],):
        raise ShapeError(f"cannot add row {_shape(row)} to {_shape(a)}")
    return a + row


def hstack(a, b) -> np.ndarray:
    """Column-wise concatenation ``[a ; b]`` per row."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"cannot concatenate {_shape(a)} with {_shape(b)}")
    return np.concatenate([a, b], axis=1)


class RngStreams:
    """One generator per purpose, all derived from a single run seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gens = {}

    def __getattr__(self, name: str) -> np.random.Generator:
        if name.startswith("_") or name not in STREAMS:
            raise AttributeError(name)
        gen = self._gens.get(name)
        if gen is None:
            gen = self._gens[name] = make_rng(self.seed, name)
        return gen
