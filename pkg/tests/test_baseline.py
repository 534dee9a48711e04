import warnings

import numpy as np
import pytest
from conftest import make_sentence
from scipy.optimize import minimize

from deepr.baseline import ConvergenceWarning, bow_featurize, bow_matrix, lr_fit, lr_objective
from deepr.vocab import build_vocab

WORKED_SENTENCE = (
    "1910 Z83 911 1008 D12 K31 1-3m R94 RAREWORD H53 Y83 M62 Y92 E87 T81 RAREWORD RAREWORD "
    "1893 D12 S14 738 1910 1916 Z83 0-1m T91 RAREWORD Y83 Y92 K91 M10 E86 6-12m K31 1008 1910 Z13 Z83"
).split()


def test_counts():
    vocab = build_vocab([["A", "B", "A"]], 0)
    a, b = vocab.id("A"), vocab.id("B")
    assert bow_featurize(make_sentence(vocab.encode(["A", "A", "B"])), vocab) == {a: 2, b: 1}
    s = make_sentence(vocab.encode(["A", "1-3m", "B"]))
    assert bow_featurize(s, vocab, include_time_tokens=False) == {a: 1, b: 1}
    assert bow_featurize(s, include_time_tokens=False) == {a: 1, b: 1}


def test_example_sentence_counts_separators():
    vocab = build_vocab([WORKED_SENTENCE], 0)
    counts = bow_featurize(make_sentence(vocab.encode(WORKED_SENTENCE)), vocab)
    for g in ("1-3m", "0-1m", "6-12m"):
        assert counts[vocab.id(g)] == 1
    assert counts[vocab.id("RAREWORD")] == 4
    assert all(c >= 1 for c in counts.values())


def test_bow_matrix():
    X = bow_matrix([make_sentence([0, 3, 3]), make_sentence([2])], 4)
    assert X.tolist() == [[1, 0, 0, 2], [0, 0, 1, 0]]
    assert bow_matrix([make_sentence([0, 2])], 4, include_time_tokens=False).tolist() == [[1, 0, 0, 0]]


def test_separable_data_is_classified_perfectly():
    X = np.array([[1.0, 0.0]] * 10 + [[0.0, 1.0]] * 10)
    y = np.array([1] * 10 + [0] * 10)
    model = lr_fit(X, y, C=0.1)
    assert model.converged
    assert np.mean((model.predict_proba(X) >= 0.5) == y) == 1.0


def small_problem(seed=0, N=40, D=5):
    rng = np.random.default_rng(seed)
    X = rng.poisson(1.0, size=(N, D)).astype(float)
    y = (rng.random(N) < 1 / (1 + np.exp(-(X @ rng.normal(size=D) - 1)))).astype(float)
    return X, y


def test_optimum_satisfies_first_order_conditions():
    X, y = small_problem()
    model = lr_fit(X, y, C=0.1)
    assert model.converged and model.grad_norm <= 1e-6
    theta = np.r_[model.weights, model.bias]

    def f(t):
        return lr_objective(t[:-1], t[-1], X, y, 0.1)[0]

    h = 1e-6
    fd = np.array([(f(theta + h * e) - f(theta - h * e)) / (2 * h) for e in np.eye(len(theta))])
    assert np.linalg.norm(fd) < 1e-6
    # a gradient norm of 1e-6 bounds the objective gap, not the parameters, tightly
    ref = minimize(f, np.zeros_like(theta), method="BFGS", options={"gtol": 1e-10}).x
    assert f(theta) <= f(ref) + 1e-10
    np.testing.assert_allclose(theta, ref, atol=1e-3)


def test_objective_gradient_matches_finite_differences():
    X, y = small_problem(1)
    rng = np.random.default_rng(2)
    w, b = rng.normal(size=X.shape[1]), 0.3
    _, gw, gb = lr_objective(w, b, X, y, 0.5)
    h = 1e-6
    for i in range(len(w)):
        e = np.zeros_like(w)
        e[i] = h
        fd = (lr_objective(w + e, b, X, y, 0.5)[0] - lr_objective(w - e, b, X, y, 0.5)[0]) / (2 * h)
        assert gw[i] == pytest.approx(fd, rel=1e-6)
    fd_b = (lr_objective(w, b + h, X, y, 0.5)[0] - lr_objective(w, b - h, X, y, 0.5)[0]) / (2 * h)
    assert gb == pytest.approx(fd_b, rel=1e-6)


def test_large_C_approaches_unpenalised_fit():
    X, y = small_problem(3, N=200, D=3)

    def unpenalised(t):
        z = X @ t[:-1] + t[-1]
        return np.mean(np.logaddexp(0, z) - y * z)

    ref = minimize(unpenalised, np.zeros(4), method="BFGS", options={"gtol": 1e-10}).x
    model = lr_fit(X, y, C=1e9, max_iter=100000)
    np.testing.assert_allclose(np.r_[model.weights, model.bias], ref, atol=1e-4)


def test_non_convergence_warns_and_returns_best():
    X, y = small_problem()
    with pytest.warns(ConvergenceWarning):
        model = lr_fit(X, y, C=0.1, max_iter=3)
    assert not model.converged and model.n_iter == 3
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        lr_fit(X, y, C=0.1)


def test_empty_training_set():
    with pytest.raises(ValueError):
        lr_fit(np.zeros((0, 3)), np.zeros(0))
