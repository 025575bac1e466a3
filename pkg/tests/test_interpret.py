import math

import numpy as np
import pytest

from mpvae.model import Hyper, zero_params
from mpvae.interpret import (
    LabelEmbeddings,
    NotPositiveDefinite,
    cholesky_lower,
    correlation_recovery_score,
    embeddings_csv,
    export_embeddings,
    inner_products_csv,
    project_2d,
    projection_csv,
    read_matrix_csv,
)


class TestCholesky:
    def test_hand_case(self):
        V = cholesky_lower([[4.0, 2.0], [2.0, 3.0]])
        np.testing.assert_allclose(V, [[2.0, 0.0], [1.0, math.sqrt(2)]], atol=1e-15)

    def test_reconstructs_random_spd(self, rng):
        A = rng.normal(size=(6, 6))
        S = A @ A.T + np.eye(6)
        V = cholesky_lower(S)
        assert np.allclose(np.triu(V, 1), 0.0)
        np.testing.assert_allclose(V @ V.T, S, atol=1e-12)
        np.testing.assert_allclose(V, np.linalg.cholesky(S), atol=1e-12)

    def test_not_positive_definite_names_index(self):
        with pytest.raises(NotPositiveDefinite, match="index 1"):
            cholesky_lower([[1.0, 2.0], [2.0, 1.0]])

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            cholesky_lower([[1.0, 0.5], [0.0, 1.0]])


def test_zero_factor_exports_identity():
    params = zero_params(2, 3, Hyper(latent_dim=1, hidden=(2, 2)))
    E = export_embeddings(params, ["a", "b", "c"])
    assert np.array_equal(E.V, np.eye(3))


def test_export_name_count_checked():
    params = zero_params(2, 3, Hyper(latent_dim=1, hidden=(2, 2)))
    with pytest.raises(ValueError):
        export_embeddings(params, ["a"])


def test_csv_round_trip(rng):
    A = rng.normal(size=(4, 4))
    E = LabelEmbeddings(cholesky_lower(A @ A.T + np.eye(4)), ["w", "x", "y", "z"])
    names, V = read_matrix_csv(embeddings_csv(E))
    assert names == E.label_names and np.array_equal(V, E.V)
    _, G = read_matrix_csv(inner_products_csv(E))
    np.testing.assert_allclose(G, E.sigma_g, atol=1e-15)
    assert embeddings_csv(E).splitlines()[0] == "label,v_1,v_2,v_3,v_4"
    assert projection_csv(E).splitlines()[0] == "label,pc1,pc2"


class TestProjection:
    def test_preserves_distances_of_planar_points(self, rng):
        pts = np.zeros((5, 4))
        pts[:, :2] = rng.normal(size=(5, 2))
        basis, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        E = LabelEmbeddings(pts @ basis.T, list("abcde"))
        coords, share = project_2d(E)
        assert share == pytest.approx(1.0)
        d_in = np.linalg.norm(E.V[:, None] - E.V[None], axis=-1)
        d_out = np.linalg.norm(coords[:, None] - coords[None], axis=-1)
        np.testing.assert_allclose(d_out, d_in, atol=1e-10)

    def test_share_matches_eigenvalues(self, rng):
        V = rng.normal(size=(6, 6))
        c = V - V.mean(axis=0)
        ev = np.sort(np.linalg.eigvalsh(c.T @ c))[::-1]
        _, share = project_2d(LabelEmbeddings(V, list("abcdef")))
        assert share == pytest.approx(ev[:2].sum() / ev.sum(), rel=1e-12)

    def test_sign_convention(self, rng):
        V = rng.normal(size=(5, 5))
        a, _ = project_2d(LabelEmbeddings(V, list("abcde")))
        b, _ = project_2d(LabelEmbeddings(-V, list("abcde")))
        # negating the rows flips the coordinates but not the component signs
        np.testing.assert_allclose(a, -b, atol=1e-12)


class TestRecoveryScore:
    def test_all_signs_agree(self):
        sigma = np.array([[1.0, 0.4, -0.2], [0.4, 1.0, 0.0], [-0.2, 0.0, 1.0]])
        corr = np.array([[1.0, 0.5, -0.6], [0.5, 1.0, 0.1], [-0.6, 0.1, 1.0]])
        assert correlation_recovery_score(sigma, corr) == 1.0

    def test_half_agree(self):
        sigma = np.array([[1.0, 0.4, 0.2], [0.4, 1.0, 0.0], [0.2, 0.0, 1.0]])
        corr = np.array([[1.0, 0.5, -0.6], [0.5, 1.0, 0.1], [-0.6, 0.1, 1.0]])
        assert correlation_recovery_score(sigma, corr) == 0.5

    def test_no_qualifying_pair(self):
        assert correlation_recovery_score(np.eye(2), np.eye(2)) == 1.0
