import hashlib
import io

import numpy as np
import pytest

from conftest import FIXTURES
from mpvae.data import (
    DatasetError,
    MultiLabelDataset,
    NoiseSpec,
    inject_label_noise,
    label_correlation,
    load_dataset,
    load_features,
    normalize_features,
    split_dataset,
    write_dense_csv,
    write_sparse_svm,
)

SMALL = FIXTURES / "yeast_small.csv"
# sha256 of the fixture after split (seed 0), train z-scoring and re-serialization
PROCESSED_SHA256 = "e5c62fb5a7504d5a55d4a4a62f276e567a4f8bf324ec50fffe3e83593bf0cf56"


def toy(n=10, S=2, L=3, seed=0):
    r = np.random.default_rng(seed)
    return MultiLabelDataset(
        "toy", r.normal(size=(n, S)), (r.random((n, L)) < 0.5).astype(float), [f"x{i}" for i in range(S)], [f"y{i}" for i in range(L)]
    )


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestDense:
    def test_fixture_shapes_and_tags(self):
        ds = load_dataset(SMALL)
        assert (ds.n_samples, ds.n_features, ds.n_labels) == (60, 12, 5)
        assert len(ds.splits["train"]) == 48 and len(ds.splits["test"]) == 12
        assert ds.label_names[0] == "c0" and ds.feature_names[-1] == "a11"

    def test_bad_label_names_line(self, tmp_path):
        p = write(tmp_path, "f:a,l:b\n1.0,0\n2.0,2\n")
        with pytest.raises(DatasetError, match="line 3"):
            load_dataset(p)

    def test_ragged_row_names_line(self, tmp_path):
        p = write(tmp_path, "f:a,f:b,l:c\n1,2,0\n1,1\n")
        with pytest.raises(DatasetError, match="line 3"):
            load_dataset(p)

    def test_unknown_format(self, tmp_path):
        with pytest.raises(DatasetError, match="format"):
            load_dataset(write(tmp_path, "f:a,l:b\n1,0\n"), fmt="arff")

    def test_round_trip(self, tmp_path):
        ds = load_dataset(SMALL)
        buf = io.StringIO()
        write_dense_csv(ds, buf)
        again = load_dataset(write(tmp_path, buf.getvalue()))
        assert np.array_equal(again.X, ds.X) and np.array_equal(again.Y, ds.Y)
        assert all(np.array_equal(again.splits[s], ds.splits[s]) for s in ds.splits)

    def test_prediction_reader_ignores_labels(self):
        X, names = load_features(SMALL)
        assert X.shape == (60, 12) and names[0] == "a0"


class TestSparse:
    def test_equivalent_to_dense(self, tmp_path):
        ds = load_dataset(SMALL)
        buf = io.StringIO()
        write_sparse_svm(ds, buf)
        sp = load_dataset(write(tmp_path, buf.getvalue(), "d.svm"), fmt="sparse_svm", n_features=12, n_labels=5)
        assert np.array_equal(sp.X, ds.X) and np.array_equal(sp.Y, ds.Y)

    def test_inferred_sizes_and_empty_labels(self, tmp_path):
        ds = load_dataset(write(tmp_path, "0,2 1:0.5\n 0:1.5\n", "d.svm"), fmt="sparse_svm")
        assert ds.X.tolist() == [[0.0, 0.5], [1.5, 0.0]]
        assert ds.Y.tolist() == [[1.0, 0.0, 1.0], [0.0, 0.0, 0.0]]

    def test_bad_pair(self, tmp_path):
        with pytest.raises(DatasetError, match="line 2"):
            load_dataset(write(tmp_path, "0 1:0.5\n1 1-0.5\n", "d.svm"), fmt="sparse_svm")


class TestSplit:
    @pytest.mark.parametrize("n,sizes", [(10, (8, 1, 1)), (1000, (800, 100, 100))])
    def test_sizes(self, n, sizes):
        ds = split_dataset(toy(n), seed=0)
        assert tuple(len(ds.splits[s]) for s in ("train", "valid", "test")) == sizes

    def test_disjoint_cover(self):
        ds = split_dataset(toy(97), seed=4)
        allidx = np.concatenate([ds.splits[s] for s in ("train", "valid", "test")])
        assert sorted(allidx) == list(range(97))

    def test_seeded(self):
        a = split_dataset(toy(50), seed=1).splits["test"]
        assert np.array_equal(a, split_dataset(toy(50), seed=1).splits["test"])
        assert not np.array_equal(a, split_dataset(toy(50), seed=2).splits["test"])

    def test_too_small(self):
        with pytest.raises(DatasetError, match="too few"):
            split_dataset(toy(2))

    def test_bad_ratios(self):
        with pytest.raises(DatasetError):
            split_dataset(toy(10), ratios=(0.5, 0.5, 0.5))

    def test_keeps_given_test_and_carves_valid(self):
        ds = split_dataset(load_dataset(SMALL), seed=0)
        assert len(ds.splits["test"]) == 12
        assert len(ds.splits["valid"]) == 5 and len(ds.splits["train"]) == 43
        assert not set(ds.splits["valid"]) & set(ds.splits["train"])

    def test_invalid_split_name(self):
        with pytest.raises(DatasetError, match="train, valid, test"):
            split_dataset(toy(10)).part("validation")


class TestNormalize:
    def test_train_statistics(self):
        ds = normalize_features(split_dataset(toy(200, S=3), seed=0))
        Xt = ds.X[ds.splits["train"]]
        np.testing.assert_allclose(Xt.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(Xt.std(axis=0), 1.0, atol=1e-12)

    def test_constant_feature_passes_through(self):
        base = toy(20)
        base.X[:, 1] = 7.0
        ds = normalize_features(split_dataset(base))
        assert np.all(ds.X[:, 1] == 7.0)

    def test_golden_processed_fixture(self):
        ds = normalize_features(split_dataset(load_dataset(SMALL), seed=0))
        buf = io.StringIO()
        write_dense_csv(ds, buf)
        assert hashlib.sha256(buf.getvalue().encode()).hexdigest() == PROCESSED_SHA256


class TestNoise:
    def test_zero_rate_is_identity(self):
        ds = split_dataset(toy(100))
        assert np.array_equal(inject_label_noise(ds, NoiseSpec(0.0)).Y, ds.Y)

    def test_full_rate_flips_train_only(self):
        ds = split_dataset(toy(100))
        noisy = inject_label_noise(ds, NoiseSpec(1.0))
        tr, te = ds.splits["train"], ds.splits["test"]
        assert np.array_equal(noisy.Y[tr], 1 - ds.Y[tr])
        assert np.array_equal(noisy.Y[te], ds.Y[te])
        assert np.array_equal(noisy.Y_clean, ds.Y)

    def test_flip_fraction_within_binomial_bounds(self):
        ds = split_dataset(toy(5000, L=4))
        noisy = inject_label_noise(ds, NoiseSpec(0.1, seed=3))
        tr = ds.splits["train"]
        n = tr.size * 4
        flipped = (noisy.Y[tr] != ds.Y[tr]).sum()
        assert abs(flipped - 0.1 * n) < 4 * np.sqrt(n * 0.1 * 0.9)

    def test_bad_rate(self):
        with pytest.raises(DatasetError):
            inject_label_noise(split_dataset(toy(10)), NoiseSpec(1.5))


def test_label_correlation():
    Y = np.array([[1, 1, 0, 1], [0, 0, 1, 1], [1, 1, 0, 1], [0, 0, 1, 1]], float)
    c = label_correlation(Y)
    assert c[0, 1] == pytest.approx(1.0) and c[0, 2] == pytest.approx(-1.0)
    assert c[0, 3] == 0.0 and c[3, 3] == 1.0
