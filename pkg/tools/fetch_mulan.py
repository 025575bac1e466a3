"""Rebuild data/yeast.csv and data/scene.csv.

The Mulan train/test splits of yeast and scene ship as pickled dumps inside
the scikit-multilearn 0.0.1 source distribution on PyPI.  This script
downloads that archive, unpickles the four dumps and writes them in the
dense_csv format with the a-priori train/test assignment in the ``split``
column (validation rows are carved from train at load time).

    python tools/fetch_mulan.py [--out data]
"""
import argparse
import bz2
import io
import pickle
import subprocess
import sys
import tarfile
import tempfile
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from mpvae.data import MultiLabelDataset, write_dense_csv  # noqa: E402

SDIST = "scikit-multilearn==0.0.1"


def fetch_sdist(workdir: Path) -> Path:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--no-binary", ":all:", "--no-build-isolation", SDIST, "-d", str(workdir)],
        check=True,
    )
    return next(workdir.glob("scikit-multilearn-0.0.1.tar.gz"))


def read_dump(tar: tarfile.TarFile, name: str) -> tuple:
    member = f"scikit-multilearn-0.0.1/skmultilearn/data/{name}.dump.bz2"
    raw = tar.extractfile(member).read()
    d = pickle.load(io.BytesIO(bz2.decompress(raw)), encoding="latin1")
    X, y = d["X"], d["y"]
    X = X.toarray() if hasattr(X, "toarray") else np.asarray(X)
    y = y.toarray() if hasattr(y, "toarray") else np.asarray(y)
    return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data")
    ap.add_argument("--sdist", help="use an already downloaded archive")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(args.sdist) if args.sdist else fetch_sdist(Path(tmp))
        with tarfile.open(path) as tar:
            for name in ("yeast", "scene"):
                X_tr, Y_tr = read_dump(tar, f"{name}-train")
                X_te, Y_te = read_dump(tar, f"{name}-test")
                X = np.vstack([X_tr, X_te])
                Y = np.vstack([Y_tr, Y_te])
                n_tr = len(X_tr)
                ds = MultiLabelDataset(
                    name,
                    X,
                    Y,
                    [f"a{j}" for j in range(X.shape[1])],
                    [f"c{j}" for j in range(Y.shape[1])],
                    {"train": np.arange(n_tr), "valid": np.arange(0), "test": np.arange(n_tr, len(X))},
                )
                write_dense_csv(ds, out / f"{name}.csv")
                print(f"{name}: {n_tr} train, {len(X_te)} test, S={X.shape[1]}, L={Y.shape[1]}")


if __name__ == "__main__":
    main()
