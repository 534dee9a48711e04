"""Bag-of-words features with L2-regularised logistic regression."""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .vocab import SPECIAL_TOKENS, Vocabulary

_DEFAULT_GAP_IDS = frozenset(range(2, len(SPECIAL_TOKENS)))


class ConvergenceWarning(UserWarning):
    pass


def bow_featurize(sentence, vocab: Vocabulary | None = None, include_time_tokens: bool = True) -> Counter:
    """Token-id counts over the whole sentence; gap words are dropped if ``include_time_tokens`` is off."""
    ids = getattr(sentence, "tokens", sentence)
    counts = Counter(int(i) for i in ids)
    if not include_time_tokens:
        gap_ids = set(vocab.gap_ids) if vocab is not None else _DEFAULT_GAP_IDS
        for g in gap_ids:
            counts.pop(g, None)
    return counts


def bow_matrix(
    sentences: Sequence,
    vocab_size: int,
    vocab: Vocabulary | None = None,
    include_time_tokens: bool = True,
) -> np.ndarray:
    X = np.zeros((len(sentences), vocab_size))
    for i, s in enumerate(sentences):
        for tok, c in bow_featurize(s, vocab, include_time_tokens).items():
            X[i, tok] = c
    return X


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    C: float
    n_iter: int
    grad_norm: float
    converged: bool

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.bias

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(X))


def lr_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, C: float):
    """Mean cross-entropy + ||w||^2 / (2 C N) and its gradient (bias unpenalised).

    Scaling the penalty by 1/N makes this the usual sum-loss-plus-||w||^2/(2C)
    objective divided by N, i.e. a N(0, C) prior on each weight; C=0.1 gives a
    prior standard deviation of about 0.32.
    """
    N = len(y)
    reg = 1.0 / (C * N)
    z = X @ w + b
    value = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * reg * (w @ w))
    r = expit(z) - y
    return value, X.T @ r / N + reg * w, float(r.mean())


def lr_fit(
    X: np.ndarray,
    y: np.ndarray,
    C: float = 0.1,
    tol: float = 1e-6,
    max_iter: int = 10000,
) -> LogisticModel:
    """Full-batch accelerated gradient descent with adaptive restart.

    Stops when the gradient norm (weights and bias jointly) falls to ``tol``.
    On hitting ``max_iter`` it warns and returns the iterate with the smallest
    gradient norm seen.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    N, D = X.shape
    if N == 0:
        raise ValueError("no training examples")
    Xb = np.hstack([X, np.ones((N, 1))])
    # smoothness of the objective: 0.25 * sigma_max(Xb)^2 / N plus the ridge term
    L = 0.25 * np.linalg.norm(Xb, 2) ** 2 / N + 1.0 / (C * N)
    step = 1.0 / L

    x = np.zeros(D + 1)
    v = x.copy()
    t = 1.0
    f_x, gw, gb = lr_objective(x[:D], x[D], X, y, C)
    best = (math.inf, x.copy())
    for it in range(1, max_iter + 1):
        f_v, gw_v, gb_v = lr_objective(v[:D], v[D], X, y, C)
        x_new = v - step * np.r_[gw_v, gb_v]
        f_new, gw, gb = lr_objective(x_new[:D], x_new[D], X, y, C)
        gnorm = math.sqrt(float(gw @ gw) + gb * gb)
        if gnorm < best[0]:
            best = (gnorm, x_new.copy())
        if gnorm <= tol:
            return LogisticModel(x_new[:D].copy(), float(x_new[D]), C, it, gnorm, True)
        if f_new > f_x:
            # momentum overshot: restart from the last good point
            t = 1.0
            v = x.copy()
            continue
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        v = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, f_x, t = x_new, f_new, t_new
    gnorm, xb = best
    warnings.warn(
        f"logistic regression did not reach gradient norm {tol} in {max_iter} iterations "
        f"(best {gnorm:.3g})",
        ConvergenceWarning,
    )
    return LogisticModel(xb[:D].copy(), float(xb[D]), C, max_iter, gnorm, False)
