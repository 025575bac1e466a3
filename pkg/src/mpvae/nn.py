"""Three-layer perceptrons with hand-written backprop, dropout and Adam."""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .core_math import NonFiniteError, ShapeError, check_finite

HIDDEN = (512, 256)
CHECKPOINT_VERSION = 1


@dataclass
class MlpParams:
    """Weights ``W[i]`` (fan_in x fan_out) and biases ``b[i]`` of 3 affine layers.

    Hidden layers use a rectifier, the output layer is linear.
    """

    weights: list
    biases: list

    @property
    def sizes(self) -> tuple:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_out(self) -> int:
        return self.weights[-1].shape[1]

    def arrays(self, prefix: str = "") -> dict:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}W{i}"] = w
            out[f"{prefix}b{i}"] = b
        return out

    @classmethod
    def from_arrays(cls, arrays: dict, prefix: str = "") -> "MlpParams":
        n = sum(1 for k in arrays if k.startswith(prefix + "W"))
        return cls(
            weights=[np.array(arrays[f"{prefix}W{i}"], dtype=np.float64) for i in range(n)],
            biases=[np.array(arrays[f"{prefix}b{i}"], dtype=np.float64) for i in range(n)],
        )

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_mlp(n_in: int, n_out: int, rng: np.random.Generator, hidden=HIDDEN) -> MlpParams:
    """He-normal weights (std = sqrt(2 / fan_in)), zero biases."""
    sizes = (n_in, *hidden, n_out)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def zero_mlp(n_in: int, n_out: int, hidden=HIDDEN) -> MlpParams:
    sizes = (n_in, *hidden, n_out)
    return MlpParams(
        [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
        [np.zeros(b) for b in sizes[1:]],
    )


@dataclass
class Tape:
    """Everything ``mlp_backward`` needs from one forward call."""

    params: MlpParams
    inputs: list  # input to each affine layer (post-dropout for hidden ones)
    pre_acts: list  # pre-rectifier values of the hidden layers
    masks: list = field(default_factory=list)  # scaled dropout masks, or None


@dataclass
class MlpGrads:
    weights: list
    biases: list

    def arrays(self, prefix: str = "") -> dict:
        return MlpParams(self.weights, self.biases).arrays(prefix)

    def __add__(self, other: "MlpGrads") -> "MlpGrads":
        return MlpGrads(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )


def mlp_forward(p: MlpParams, x, dropout_rate: float = 0.0, rng=None, train_mode: bool = False):
    """Forward pass over a batch ``x`` of shape (batch, n_in).

    Dropout follows each hidden activation in train mode, using inverted
    scaling so that eval mode needs no rescale.  Eval mode never touches
    ``rng``.
    """
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != p.n_in:
        raise ShapeError(f"input shape {x.shape} does not match layer shape {p.weights[0].shape}")
    use_dropout = train_mode and dropout_rate > 0.0
    if use_dropout and rng is None:
        raise ValueError("dropout in train mode needs an rng")

    inputs, pre_acts, masks = [], [], []
    h = x
    last = len(p.weights) - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        inputs.append(h)
        a = h @ w + b
        if i == last:
            h = a
            break
        pre_acts.append(a)
        h = np.maximum(a, 0.0)
        if use_dropout:
            keep = rng.random(h.shape) >= dropout_rate
            mask = keep / (1.0 - dropout_rate)
            h = h * mask
            masks.append(mask)
        else:
            masks.append(None)
    if not np.all(np.isfinite(h)):
        raise NonFiniteError("MLP produced non-finite output")
    return h, Tape(p, inputs, pre_acts, masks)


def mlp_backward(tape: Tape, grad_out) -> tuple:
    """Exact gradients of ``sum(grad_out * output)`` w.r.t. params and input."""
    p = tape.params
    g = np.asarray(grad_out, dtype=np.float64)
    n_batch = tape.inputs[0].shape[0]
    if g.shape != (n_batch, p.n_out):
        raise ShapeError(f"grad_out shape {g.shape} does not match output shape {(n_batch, p.n_out)}")

    n_layers = len(p.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        gw[i] = tape.inputs[i].T @ g
        gb[i] = g.sum(axis=0)
        g = g @ p.weights[i].T
        if i > 0:
            mask = tape.masks[i - 1]
            if mask is not None:
                g = g * mask
            g = g * (tape.pre_acts[i - 1] > 0.0)
    return MlpGrads(gw, gb), g


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> tuple:
    """Bias-corrected Adam update, in place on ``params`` and ``state``.

    ``params`` and ``grads`` map block names to arrays.  Blocks missing from
    ``grads`` are left untouched.  Returns ``(params, state)``.
    """
    if state.lr <= 0:
        raise ValueError(f"learning rate must be positive, got {state.lr}")
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter block {name!r}")
        if np.shape(g) != np.shape(params[name]):
            raise ShapeError(f"gradient {name} has shape {np.shape(g)}, parameter has {np.shape(params[name])}")
        check_finite(g, f"gradient of {name}")
    state.t += 1
    t = state.t
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, g in grads.items():
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(params[name])
            v = np.zeros_like(params[name])
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        params[name] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def save_arrays(path, arrays: dict, header: dict | None = None) -> None:
    """Write named float arrays plus a JSON header to an ``.npz`` container.

    Shapes and dtypes are stored in the ``.npy`` member headers, so a load
    returns bit-identical arrays.  Zip timestamps are pinned so identical
    contents give identical bytes.
    """
    meta = {**(header or {}), "container": "mpvae-checkpoint", "container_version": CHECKPOINT_VERSION}
    payload = {k: np.asarray(v) for k, v in arrays.items()}
    payload["__header__"] = np.array(json.dumps(meta, sort_keys=True))
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(payload):
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            buf = io.BytesIO()
            np.lib.format.write_array(buf, payload[name], allow_pickle=False)
            zf.writestr(info, buf.getvalue())


def load_arrays(path) -> tuple:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["__header__"]))
        arrays = {k: z[k] for k in z.files if k != "__header__"}
    if header.get("container") != "mpvae-checkpoint":
        raise ValueError(f"{path} is not an mpvae checkpoint")
    if header.get("container_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('container_version')}")
    return arrays, header
