import numpy as np
from scipy.stats import rankdata


def accuracy(probs, labels, threshold: float = 0.5) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.shape != labels.shape:
        raise ValueError("predictions and labels are not aligned")
    if probs.size == 0:
        return float("nan")
    return float(np.mean((probs >= threshold) == (labels == 1)))


def roc_auc(scores, labels) -> float | None:
    """Mann-Whitney AUC with mid-ranks for ties; None when only one class is present."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels) == 1
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def evaluate(probs, labels) -> dict:
    return {"accuracy": accuracy(probs, labels), "auc": roc_auc(probs, labels)}
