"""Dataset files, splitting, feature scaling and label-noise injection.

Two on-disk formats are read (both UTF-8, ``#`` lines ignored):

``dense_csv``
    Header ``f:<name>,...,l:<name>,...`` with an optional last column
    ``split`` whose values are ``train``, ``valid`` or ``test``.  Features are
    decimal floats, labels are 0/1.

``sparse_svm``
    One sample per line: comma-separated positive label indices (0-based,
    may be absent), whitespace, then ``idx:value`` feature pairs (0-based).
"""
from __future__ import annotations

import dataclasses
import io
from dataclasses import dataclass, field

import numpy as np

from .core_math import make_rng

SPLITS = ("train", "valid", "test")
FORMATS = ("dense_csv", "sparse_svm")


class DatasetError(ValueError):
    pass


@dataclass
class MultiLabelDataset:
    name: str
    X: np.ndarray
    Y: np.ndarray
    feature_names: list
    label_names: list
    splits: dict = field(default_factory=dict)
    Y_clean: np.ndarray | None = None
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_labels(self) -> int:
        return self.Y.shape[1]

    def has_splits(self) -> bool:
        return all(len(self.splits.get(s, ())) > 0 for s in SPLITS)

    def part(self, split: str) -> tuple:
        """``(X, Y)`` rows of one named split."""
        if split not in SPLITS:
            raise DatasetError(f"unknown split {split!r}; valid names are {', '.join(SPLITS)}")
        idx = self.splits.get(split)
        if idx is None or len(idx) == 0:
            raise DatasetError(f"split {split!r} is empty")
        return self.X[idx], self.Y[idx]


@dataclass(frozen=True)
class NoiseSpec:
    flip_rate: float
    seed: int = 0


def _data_lines(text: str):
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield lineno, line


def _parse_label(tok: str, lineno: int) -> int:
    try:
        v = float(tok)
    except ValueError:
        raise DatasetError(f"line {lineno}: label value {tok!r} is not a number") from None
    if v not in (0.0, 1.0):
        raise DatasetError(f"line {lineno}: label value {tok!r} is not 0/1")
    return int(v)


def _read_dense(text: str, name: str) -> MultiLabelDataset:
    lines = _data_lines(text)
    try:
        header_no, header = next(lines)
    except StopIteration:
        raise DatasetError("empty file: no header row") from None
    cols = [c.strip() for c in header.split(",")]
    has_split = cols[-1] == "split"
    body = cols[:-1] if has_split else cols
    f_cols = [i for i, c in enumerate(body) if c.startswith("f:")]
    l_cols = [i for i, c in enumerate(body) if c.startswith("l:")]
    if len(f_cols) + len(l_cols) != len(body):
        bad = [c for c in body if not c.startswith(("f:", "l:"))]
        raise DatasetError(f"line {header_no}: unrecognised columns {bad}")
    if not f_cols:
        raise DatasetError(f"line {header_no}: no feature columns")

    X, Y, split_of = [], [], []
    for lineno, line in lines:
        toks = [t.strip() for t in line.split(",")]
        if len(toks) != len(cols):
            raise DatasetError(f"line {lineno}: ragged row, expected {len(cols)} fields, got {len(toks)}")
        try:
            X.append([float(toks[i]) for i in f_cols])
        except ValueError as e:
            raise DatasetError(f"line {lineno}: bad feature value ({e})") from None
        Y.append([_parse_label(toks[i], lineno) for i in l_cols])
        if has_split:
            if toks[-1] not in SPLITS:
                raise DatasetError(f"line {lineno}: split {toks[-1]!r} not one of {SPLITS}")
            split_of.append(toks[-1])
    if not X:
        raise DatasetError("file has a header but no data rows")
    X = np.array(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise DatasetError("non-finite feature values")
    Y = np.array(Y, dtype=np.float64).reshape(len(X), len(l_cols))
    splits = {}
    if has_split:
        tags = np.array(split_of)
        splits = {s: np.flatnonzero(tags == s) for s in SPLITS}
    return MultiLabelDataset(
        name,
        X,
        Y,
        [body[i][2:] for i in f_cols],
        [body[i][2:] for i in l_cols],
        splits,
    )


def _read_sparse(text: str, name: str, n_features=None, n_labels=None) -> MultiLabelDataset:
    rows = []
    max_f = max_l = -1
    for lineno, line in _data_lines(text):
        toks = line.split()
        if line[0].isspace() or ":" in toks[0]:
            label_tok, feat_toks = "", toks
        else:
            label_tok, feat_toks = toks[0], toks[1:]
        labels = []
        if label_tok:
            for t in label_tok.split(","):
                if not t.isdigit():
                    raise DatasetError(f"line {lineno}: bad label index {t!r}")
                labels.append(int(t))
        feats = {}
        for t in feat_toks:
            idx, sep, val = t.partition(":")
            if not sep or not idx.isdigit():
                raise DatasetError(f"line {lineno}: bad feature pair {t!r}")
            if int(idx) in feats:
                raise DatasetError(f"line {lineno}: duplicate feature index {idx}")
            try:
                feats[int(idx)] = float(val)
            except ValueError:
                raise DatasetError(f"line {lineno}: bad feature value {val!r}") from None
        max_l = max([max_l, *labels])
        max_f = max([max_f, *feats])
        rows.append((lineno, labels, feats))
    if not rows:
        raise DatasetError("file has no data rows")
    S = max_f + 1 if n_features is None else n_features
    L = max_l + 1 if n_labels is None else n_labels
    if max_f >= S or max_l >= L:
        raise DatasetError(f"indices exceed declared sizes (features {S}, labels {L})")
    X = np.zeros((len(rows), S))
    Y = np.zeros((len(rows), L))
    for r, (_, labels, feats) in enumerate(rows):
        Y[r, labels] = 1.0
        for j, v in feats.items():
            X[r, j] = v
    if not np.all(np.isfinite(X)):
        raise DatasetError("non-finite feature values")
    return MultiLabelDataset(name, X, Y, [str(i) for i in range(S)], [str(i) for i in range(L)])


def load_dataset(path, fmt: str = "dense_csv", name: str | None = None, n_features=None, n_labels=None) -> MultiLabelDataset:
    """Parse a dataset file; errors name the offending line."""
    if fmt not in FORMATS:
        raise DatasetError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    name = name or str(path).rsplit("/", 1)[-1].split(".")[0]
    if fmt == "dense_csv":
        return _read_dense(text, name)
    return _read_sparse(text, name, n_features, n_labels)


def load_features(path) -> tuple:
    """Read a dense CSV for prediction: ``(X, feature_names)``; label columns are ignored."""
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    lines = _data_lines(text)
    try:
        header_no, header = next(lines)
    except StopIteration:
        raise DatasetError("empty file: no header row") from None
    cols = [c.strip() for c in header.split(",")]
    f_cols = [i for i, c in enumerate(cols) if c.startswith("f:")]
    if not f_cols:
        raise DatasetError(f"line {header_no}: no feature columns")
    X = []
    for lineno, line in lines:
        toks = line.split(",")
        if len(toks) != len(cols):
            raise DatasetError(f"line {lineno}: ragged row, expected {len(cols)} fields, got {len(toks)}")
        try:
            X.append([float(toks[i]) for i in f_cols])
        except ValueError as e:
            raise DatasetError(f"line {lineno}: bad feature value ({e})") from None
    return np.array(X, dtype=np.float64).reshape(len(X), len(f_cols)), [cols[i][2:] for i in f_cols]


def write_dense_csv(ds: MultiLabelDataset, out, with_splits: bool = True) -> None:
    """Write ``ds`` in ``dense_csv``; floats use ``repr`` so they reload exactly."""
    tags = None
    if with_splits and ds.splits:
        tags = np.full(ds.n_samples, "", dtype=object)
        for s in SPLITS:
            tags[ds.splits.get(s, [])] = s
        if np.any(tags == ""):
            raise DatasetError("splits do not cover every row")
    buf = io.StringIO()
    header = [f"f:{n}" for n in ds.feature_names] + [f"l:{n}" for n in ds.label_names]
    if tags is not None:
        header.append("split")
    buf.write(",".join(header) + "\n")
    for i in range(ds.n_samples):
        row = [repr(float(v)) for v in ds.X[i]] + [str(int(v)) for v in ds.Y[i]]
        if tags is not None:
            row.append(tags[i])
        buf.write(",".join(row) + "\n")
    _emit(out, buf.getvalue())


def write_sparse_svm(ds: MultiLabelDataset, out) -> None:
    buf = io.StringIO()
    for i in range(ds.n_samples):
        labels = ",".join(str(j) for j in np.flatnonzero(ds.Y[i]))
        feats = " ".join(f"{j}:{float(ds.X[i, j])!r}" for j in np.flatnonzero(ds.X[i]))
        buf.write(f"{labels} {feats}".rstrip() + "\n")
    _emit(out, buf.getvalue())


def _emit(out, text: str) -> None:
    if hasattr(out, "write"):
        out.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def split_dataset(ds: MultiLabelDataset, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> MultiLabelDataset:
    """Assign train/valid/test rows by a seeded shuffle.

    Splits already present in the source are kept.  If only train and test
    were given, a validation set is carved out of train at the
    valid : train ratio.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise DatasetError(f"split ratios must be three positive numbers summing to 1, got {ratios}")
    if ds.has_splits():
        return ds
    rng = make_rng(seed, "split")
    sp = ds.splits
    if len(sp.get("train", ())) > 0 and len(sp.get("test", ())) > 0:
        train = rng.permutation(sp["train"])
        n_valid = max(1, int(round(len(train) * ratios[1] / (ratios[0] + ratios[1]))))
        if n_valid >= len(train):
            raise DatasetError("train split too small to carve out a validation split")
        splits = {"train": np.sort(train[n_valid:]), "valid": np.sort(train[:n_valid]), "test": sp["test"]}
        return dataclasses.replace(ds, splits=splits)
    N = ds.n_samples
    n_valid = max(1, int(round(N * ratios[1])))
    n_test = max(1, int(round(N * ratios[2])))
    n_train = N - n_valid - n_test
    if n_train < 1:
        raise DatasetError(f"{N} rows are too few for three non-empty splits")
    perm = rng.permutation(N)
    splits = {
        "train": np.sort(perm[:n_train]),
        "valid": np.sort(perm[n_train : n_train + n_valid]),
        "test": np.sort(perm[n_train + n_valid :]),
    }
    return dataclasses.replace(ds, splits=splits)


def normalize_features(ds: MultiLabelDataset) -> MultiLabelDataset:
    """Z-score every feature with train-split statistics.

    Near-constant features (train std < 1e-12) pass through unchanged.
    """
    train = ds.splits.get("train")
    if train is None or len(train) == 0:
        raise DatasetError("normalization needs a non-empty train split")
    mean, std = feature_stats(ds.X[train])
    return dataclasses.replace(ds, X=apply_normalization(ds.X, mean, std), norm_mean=mean, norm_std=std)


def feature_stats(X) -> tuple:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    flat = std < 1e-12
    return np.where(flat, 0.0, mean), np.where(flat, 1.0, std)


def apply_normalization(X, mean, std) -> np.ndarray:
    if mean is None:
        return np.asarray(X, dtype=np.float64)
    return (np.asarray(X, dtype=np.float64) - mean) / std


def inject_label_noise(ds: MultiLabelDataset, spec: NoiseSpec) -> MultiLabelDataset:
    """Flip each train-split label bit independently with probability ``flip_rate``."""
    if not 0.0 <= spec.flip_rate <= 1.0:
        raise DatasetError(f"flip rate must be in [0, 1], got {spec.flip_rate}")
    train = ds.splits.get("train")
    if train is None or len(train) == 0:
        raise DatasetError("noise injection needs a train split")
    rng = make_rng(spec.seed, "noise")
    flip = rng.random((len(train), ds.n_labels)) < spec.flip_rate
    Y = ds.Y.copy()
    Y[train] = np.where(flip, 1.0 - Y[train], Y[train])
    clean = ds.Y if ds.Y_clean is None else ds.Y_clean
    return dataclasses.replace(ds, Y=Y, Y_clean=clean)


def label_correlation(Y) -> np.ndarray:
    """Pearson correlation between label columns; constant columns give 0."""
    Y = np.asarray(Y, dtype=np.float64)
    c = Y - Y.mean(axis=0)
    sd = np.sqrt((c * c).mean(axis=0))
    cov = c.T @ c / len(Y)
    denom = np.outer(sd, sd)
    corr = np.divide(cov, denom, out=np.zeros_like(cov), where=denom > 0)
    np.fill_diagonal(corr, 1.0)
    return corr
