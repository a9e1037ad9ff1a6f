import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scuc_lab.learn import (kfold_evaluate, kfold_predictions, model_objective, precision_recall, svm_objective,
                            svm_train)
from scuc_lab.learn.svm import SvmModel


def qp_oracle(Z, h, C):
    """Exact optimum of the soft-margin QP via an interior-point solver."""
    n, d = Z.shape
    w, b, a = cp.Variable(d), cp.Variable(), cp.Variable(n)
    prob = cp.Problem(cp.Minimize(0.5 * cp.sum_squares(w) + C / n * cp.sum(a)),
                      [cp.multiply(h, Z @ w - b) >= 1 - a, a >= 0])
    prob.solve(solver="CLARABEL")
    return prob.value


def test_separable_one_dimensional():
    m = svm_train([[-1.0], [1.0]], [-1, 1], C=1000.0, standardize=False)
    assert m.classify([-1.0]) == -1 and m.classify([1.0]) == 1
    assert m.weights[0] == pytest.approx(1.0, rel=1e-4) and m.intercept == pytest.approx(0.0, abs=1e-6)


def test_flipped_labels_negate_weights():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(15, 3))
    h = np.where(X[:, 0] - 0.5 * X[:, 1] > 0, 1, -1)
    a, b = svm_train(X, h, 2.0), svm_train(X, -h, 2.0)
    assert np.allclose(a.weights, -b.weights, atol=1e-4)
    assert a.intercept == pytest.approx(-b.intercept, abs=1e-4)


def test_xor_matches_oracle():
    X = np.array([[0, 0], [1, 1], [0, 1], [1, 0], [0.1, 0.1], [0.9, 0.9], [0.1, 0.9], [0.9, 0.1]], dtype=float)
    h = np.array([1, 1, -1, -1, 1, 1, -1, -1])
    m = svm_train(X, h, C=5.0)
    got = model_objective(m, X, h, 5.0)
    assert got <= qp_oracle(m.transform(X), h, 5.0) * 1.01
    assert (m.classify(X) != h).any()


@settings(max_examples=40)
@given(st.integers(0, 10**6), st.integers(2, 20), st.integers(1, 4), st.sampled_from([0.1, 1.0, 10.0, 1000.0]),
       st.booleans())
def test_objective_within_one_percent_of_oracle(seed, n, d, C, standardize):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d)) * rng.uniform(0.1, 100, size=d)
    h = rng.choice([-1, 1], size=n)
    h[0], h[1] = 1, -1
    m = svm_train(X, h, C, standardize)
    got = model_objective(m, X, h, C)
    assert got <= qp_oracle(m.transform(X), h, C) * 1.01 + 1e-9
    assert got <= C + 1e-12  # the zero hyperplane is feasible with objective C


def test_single_class_rejected():
    with pytest.raises(ValueError, match="single-class"):
        svm_train([[0.0], [1.0]], [1, 1])
    with pytest.raises(ValueError):
        svm_train([[0.0], [np.inf]], [1, -1])


def test_hyperplane_points_count_as_positive():
    m = SvmModel([1.0], 2.0, [0.0], [1.0])
    assert m.classify([2.0]) == 1 and m.classify([1.99]) == -1
    assert SvmModel.from_dict(m.to_dict()).classify([2.0]) == 1


def test_svm_objective_zero_hyperplane():
    assert svm_objective([0.0, 0.0], 0.0, np.ones((4, 2)), [1, -1, 1, -1], 3.0) == pytest.approx(3.0)


def test_precision_recall_examples():
    assert precision_recall([1, 1, -1, -1], [1, -1, 1, -1]) == (0.5, 0.5)
    assert precision_recall([1, -1, 1], [1, -1, 1]) == (1.0, 1.0)
    assert precision_recall([-1, -1, -1], [1, -1, -1])[1] == 0.0
    assert precision_recall([-1, -1], [-1, -1]) == (1.0, 1.0)
    assert precision_recall([-1, -1], [1, -1]) == (0.0, 0.0)
    assert precision_recall([1, -1], [-1, -1]) == (0.0, 0.0)
    with pytest.raises(ValueError):
        precision_recall([1], [1, -1])


def test_kfold_separable():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(40, 2))
    h = np.where(X[:, 0] > 0, 1, -1)
    X[:, 0] += 0.5 * h  # open a margin
    for k in (2, 5, 8):
        assert kfold_evaluate(X, h, k, C=100.0) == (1.0, 1.0)


def test_kfold_noise_tracks_base_rate():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(500, 3))
    h = np.where(rng.uniform(size=500) < 0.7, 1, -1)
    precision, _ = kfold_evaluate(X, h, 5)
    assert abs(precision - np.mean(h == 1)) <= 0.1


def test_leave_one_out_by_hand():
    # hard-margin boundaries: leave out 0 -> all +1 (majority), out 1 -> 1.5, out 3 -> 0.5, out 4 -> 0.5
    X = np.array([[0.0], [1.0], [3.0], [4.0]])
    h = np.array([-1, 1, 1, 1])
    assert kfold_predictions(X, h, 4, C=1e4).tolist() == [1, -1, 1, 1]
    assert kfold_evaluate(X, h, 4, C=1e4) == pytest.approx((2 / 3, 2 / 3))


def test_single_class_fold_uses_majority():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    h = np.array([1, 1, -1, -1])
    assert kfold_predictions(X, h, 2).tolist() == [-1, -1, 1, 1]
    assert kfold_evaluate(X, h, 2) == (0.0, 0.0)


def test_remainder_dropped():
    X = np.arange(7, dtype=float)[:, None]
    h = np.array([-1, -1, -1, 1, 1, 1, 1])
    assert len(kfold_predictions(X, h, 3)) == 6
