"""Flat ``key = value`` run configuration."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .model import Hyper
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # data
    dataset: str = ""
    format: str = "dense_csv"
    n_features: int = 0  # sparse_svm only; 0 = infer from the file
    n_labels: int = 0
    split_ratios: tuple = (0.8, 0.1, 0.1)
    normalize: bool = True
    # training
    seed: int = 0
    batch_size: int = 128
    max_epochs: int = 200
    lr: float = 1e-3
    lr_decay: float = 0.97
    patience: int = 20
    # model
    beta: float = 1.1
    lambda1: float = 0.5
    lambda2: float = 10.0
    lambda3: float = 0.5
    sparse_labels: bool = False
    dropout: float = 0.5
    latent_dim: int = 64
    hidden: tuple = (512, 256)
    m_train: int = 40
    m_eval: int = 200
    # evaluation and experiments
    k_list: tuple = (1, 3, 5)
    noise_rates: tuple = (0.0, 0.1, 0.2, 0.3, 0.4)
    out: str = "runs/default"

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.batch_size, self.max_epochs, self.lr, self.lr_decay, self.patience, self.seed)

    def hyper(self) -> Hyper:
        return Hyper(
            beta=self.beta,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            lambda3=self.lambda3,
            sparse_labels=self.sparse_labels,
            dropout=self.dropout,
            latent_dim=self.latent_dim,
            m_train=self.m_train,
            m_eval=self.m_eval,
            hidden=tuple(self.hidden),
        )

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}
_ITEM_TYPES = {"split_ratios": float, "hidden": int, "k_list": int, "noise_rates": float}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind is tuple:
            return tuple(_ITEM_TYPES[key](x) for x in raw.split(",") if x.strip())
        return kind(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}") from None


def apply_overrides(cfg: RunConfig, pairs: dict) -> RunConfig:
    updates = {}
    for key, raw in pairs.items():
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        updates[key] = _coerce(key, raw) if isinstance(raw, str) else raw
    return dataclasses.replace(cfg, **updates)


def parse_config(text: str, source: str = "<config>") -> dict:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key = key.strip()
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        pairs[key] = value.strip()
    return pairs


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if path:
        with open(path, encoding="utf-8") as fh:
            cfg = apply_overrides(cfg, parse_config(fh.read(), str(path)))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg
