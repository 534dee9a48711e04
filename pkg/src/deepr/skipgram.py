"""Skip-gram with negative sampling, used to warm-start the embedding matrix.

Separator words (time gaps, TRANSFER) are treated as ordinary tokens.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

from .model import scatter_add_rows


@dataclass(frozen=True)
class PretrainConfig:
    window: int = 5
    negatives: int = 5
    dims: int = 100
    epochs: int = 5
    learning_rate: float = 0.025
    seed: int = 0
    batch_size: int = 512

    def __post_init__(self):
        if self.window < 1 or self.negatives < 1:
            raise ValueError("window and negatives must be >= 1")
        if self.dims < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("dims, epochs and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def skipgram_pairs(sentence: Sequence[int], window: int) -> np.ndarray:
    """All (center, context) pairs with 0 < |offset| <= window, as an (n, 2) array."""
    s = np.asarray(sentence, dtype=np.int64)
    T = len(s)
    out = []
    for d in range(1, window + 1):
        if d >= T:
            break
        out.append(np.stack([s[:-d], s[d:]], axis=1))
        out.append(np.stack([s[d:], s[:-d]], axis=1))
    if not out:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(out)


def negative_distribution(corpus: Iterable[Sequence[int]], vocab_size: int, power: float = 0.75) -> np.ndarray:
    counts = np.zeros(vocab_size)
    for s in corpus:
        np.add.at(counts, np.asarray(s, dtype=np.int64), 1)
    weights = counts**power
    total = weights.sum()
    if total == 0:
        raise ValueError("corpus has no tokens")
    return weights / total


def pretrain_embeddings(
    corpus: Sequence[Sequence[int]],
    vocab_size: int,
    cfg: PretrainConfig = PretrainConfig(),
) -> np.ndarray:
    """Train input/output vectors by SGD and return the input vectors, shape (V, dims).

    Input vectors start at U(-0.5/dims, 0.5/dims), output vectors at zero; the
    learning rate decays linearly to 1e-4 of its start value over all updates.
    """
    corpus = [getattr(s, "tokens", s) for s in corpus]
    if not corpus:
        raise ValueError("empty corpus")
    rng = np.random.default_rng(cfg.seed)
    m = cfg.dims
    w_in = rng.uniform(-0.5 / m, 0.5 / m, size=(vocab_size, m))
    w_out = np.zeros((vocab_size, m))
    if cfg.learning_rate == 0:
        return w_in

    pairs = np.concatenate([skipgram_pairs(s, cfg.window) for s in corpus])
    if len(pairs) == 0:
        return w_in
    noise = negative_distribution(corpus, vocab_size)
    cdf = np.cumsum(noise)
    n_batches = -(-len(pairs) // cfg.batch_size)
    total_steps = cfg.epochs * n_batches
    step = 0
    K = cfg.negatives
    for _ in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        for start in range(0, len(pairs), cfg.batch_size):
            lr = cfg.learning_rate * max(1e-4, 1.0 - step / total_steps)
            step += 1
            batch = pairs[order[start : start + cfg.batch_size]]
            c, o = batch[:, 0], batch[:, 1]
            B = len(c)
            neg = np.minimum(np.searchsorted(cdf, rng.random((B, K)), side="right"), vocab_size - 1)
            v = w_in[c]  # (B, m)
            targets = np.concatenate([o[:, None], neg], axis=1)  # (B, 1+K)
            u = w_out[targets]  # (B, 1+K, m)
            score = expit(np.einsum("bm,bkm->bk", v, u))
            label = np.zeros((B, 1 + K))
            label[:, 0] = 1.0
            g = score - label  # d(-log-likelihood)/d(score logit)
            dv = np.einsum("bk,bkm->bm", g, u)
            du = g[:, :, None] * v[:, None, :]
            w_in -= lr * scatter_add_rows(vocab_size, c, dv)
            w_out -= lr * scatter_add_rows(vocab_size, targets.ravel(), du.reshape(-1, m))
    return w_in
