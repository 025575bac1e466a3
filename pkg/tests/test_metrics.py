import numpy as np
import pytest

from helpers import brute_force_metrics
from mpvae.metrics import (
    EvalReport,
    evaluate,
    example_f1,
    hamming_accuracy,
    macro_f1,
    micro_f1,
    precision_at_k,
)

Y = np.array([[1, 0, 1], [0, 1, 0]])


def test_perfect_prediction():
    for fn in (example_f1, micro_f1, macro_f1, hamming_accuracy):
        assert fn(Y, Y) == 1.0


def test_complement_prediction():
    assert example_f1(Y, 1 - Y) == 0.0
    assert hamming_accuracy(Y, 1 - Y) == 0.0


def test_empty_rows_contribute_zero():
    assert example_f1([[0, 0], [1, 0]], [[0, 0], [1, 0]]) == 0.5
    assert micro_f1([[0, 0]], [[0, 0]]) == 0.0


def test_hand_computed_case():
    Y_hat = np.array([[1, 1, 0], [0, 1, 0]])
    # row 0: tp 1, |y| 2, |y_hat| 2 -> 0.5; row 1: 1.0
    assert example_f1(Y, Y_hat) == pytest.approx(0.75)
    # tp 2, fp 1, fn 1
    assert micro_f1(Y, Y_hat) == pytest.approx(4 / 6)
    assert macro_f1(Y, Y_hat) == pytest.approx((1.0 + 2 / 3 + 0.0) / 3)
    assert hamming_accuracy(Y, Y_hat) == pytest.approx(4 / 6)


def test_precision_at_k_breaks_ties_toward_lower_index():
    P = np.array([[0.5, 0.5, 0.5]])
    assert precision_at_k([[1, 0, 0]], P, 1) == 1.0
    assert precision_at_k([[0, 0, 1]], P, 1) == 0.0
    assert precision_at_k([[0, 0, 1]], P, 3) == pytest.approx(1 / 3)


def test_precision_at_k_range():
    with pytest.raises(ValueError, match="K"):
        precision_at_k(Y, np.zeros((2, 3)), 4)


def test_non_binary_rejected():
    with pytest.raises(ValueError, match="non-binary"):
        example_f1(Y, Y * 0.5)


def test_matches_brute_force_on_random_instances():
    r = np.random.default_rng(0)
    for _ in range(100):
        Yt = (r.random((8, 5)) < 0.4).astype(int)
        P = np.round(r.random((8, 5)), 1)  # coarse grid forces ties
        Yh = (P > 0.5).astype(int)
        ref = brute_force_metrics(Yt.tolist(), Yh.tolist(), P.tolist(), ks=(1, 3, 5))
        rep = evaluate(Yt, P, 0.5, ks=(1, 3, 5))
        for key in ("example_f1", "micro_f1", "macro_f1", "hamming_accuracy"):
            assert abs(getattr(rep, key) - ref[key]) < 1e-12
        for k in (1, 3, 5):
            assert abs(rep.precision_at_k[k] - ref[f"p@{k}"]) < 1e-12


def test_invariant_under_row_and_label_permutation():
    r = np.random.default_rng(1)
    Yt = (r.random((10, 4)) < 0.5).astype(int)
    Yh = (r.random((10, 4)) < 0.5).astype(int)
    rows, cols = r.permutation(10), r.permutation(4)
    for fn in (example_f1, micro_f1, macro_f1, hamming_accuracy):
        assert fn(Yt, Yh) == pytest.approx(fn(Yt[rows][:, cols], Yh[rows][:, cols]), abs=1e-15)


def test_micro_equals_macro_for_one_label():
    r = np.random.default_rng(2)
    Yt = (r.random((30, 1)) < 0.5).astype(int)
    Yh = (r.random((30, 1)) < 0.5).astype(int)
    assert micro_f1(Yt, Yh) == pytest.approx(macro_f1(Yt, Yh), abs=1e-15)


def test_report_json_round_trip():
    rep = evaluate(Y, np.array([[0.9, 0.2, 0.6], [0.1, 0.7, 0.3]]), 0.5, ks=(1, 3, 5))
    assert set(rep.precision_at_k) == {1, 3}
    again = EvalReport.from_json(rep.to_json())
    assert again == rep
    assert rep.to_json() == again.to_json()


def test_four_by_three_tally():
    Yt = np.array([[1, 0, 1], [0, 1, 1], [1, 1, 0], [0, 0, 0]])
    Yh = np.array([[1, 1, 0], [0, 1, 1], [0, 0, 0], [0, 0, 1]])
    # per label (tp, fp, fn): (1, 0, 1), (1, 1, 1), (1, 1, 1)
    assert macro_f1(Yt, Yh) == pytest.approx((2 / 3 + 0.5 + 0.5) / 3, abs=1e-15)
    assert micro_f1(Yt, Yh) == pytest.approx(6 / 11, abs=1e-15)
    assert example_f1(Yt, Yh) == pytest.approx((0.5 + 1.0 + 0.0 + 0.0) / 4, abs=1e-15)
    assert hamming_accuracy(Yt, Yh) == pytest.approx(7 / 12, abs=1e-15)
