import itertools

import numpy as np
import pytest

from deepr.metrics import accuracy, evaluate, roc_auc


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


def test_perfect_predictions():
    assert evaluate([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == {"accuracy": 1.0, "auc": 1.0}


def test_constant_predictor():
    # a probability of exactly 0.5 is classified positive, so a constant 0.5
    # scores the positive fraction, which is the majority fraction here
    labels = [1, 1, 1, 0]
    assert accuracy([0.5] * 4, labels) == 0.75
    assert roc_auc([0.5] * 4, labels) == 0.5


def test_six_example_auc_matches_pair_counting():
    scores = [0.9, 0.4, 0.4, 0.7, 0.2, 0.4]
    labels = [1, 0, 1, 0, 0, 1]
    assert roc_auc(scores, labels) == pytest.approx(brute_auc(scores, labels), abs=1e-15)


def test_random_auc_matches_pair_counting():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 30))
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            continue
        scores = rng.integers(0, 5, n) / 4
        assert roc_auc(scores, labels) == pytest.approx(brute_auc(scores, labels), abs=1e-12)


def test_single_class_auc_is_none():
    assert roc_auc([0.1, 0.9], [1, 1]) is None
    assert evaluate([0.1, 0.9], [0, 0])["auc"] is None


def test_threshold_and_alignment():
    assert accuracy([0.49, 0.5], [0, 1]) == 1.0
    with pytest.raises(ValueError):
        accuracy([0.1], [0, 1])
