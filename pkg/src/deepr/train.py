"""Cross-entropy training with hand-written backprop and mini-batch SGD."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .metrics import accuracy, roc_auc
from .model import ModelConfig, ModelParams, backward_batch, forward_batch, predict_proba_batched

log = logging.getLogger(__name__)

PROB_EPS = 1e-12


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    l2_lambda: float = 1.0
    learning_rate: float = 0.05
    lr_decay: float = 1.0
    seed: int = 0
    grad_clip: float | None = None
    # "batch": penalty is (l2_lambda/2)||w||^2 added to the mean batch loss.
    # "dataset": l2_lambda is a prior precision on the summed log-likelihood,
    # i.e. the per-step penalty weight is l2_lambda / n_train.
    l2_scale: str = "dataset"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.l2_scale not in ("batch", "dataset"):
            raise ValueError(f"unknown l2_scale {self.l2_scale!r}")

    def penalty_weight(self, n_train: int) -> float:
        return self.l2_lambda / n_train if self.l2_scale == "dataset" else self.l2_lambda

    def to_dict(self) -> dict:
        return asdict(self)


def _unzip(batch: Sequence) -> tuple[list, np.ndarray]:
    """Accept (sentence, label) pairs or labelled Sentence objects."""
    sentences, labels = [], []
    for item in batch:
        if isinstance(item, tuple) and len(item) == 2:
            s, y = item
        else:
            s, y = item, item.label
        if y not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {y!r}")
        sentences.append(s)
        labels.append(y)
    return sentences, np.asarray(labels, dtype=np.float64)


def _l2(params: ModelParams) -> float:
    return sum(float(np.sum(a * a)) for a in params.penalized_arrays())


def _bce(logits: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p = expit(logits)
    pc = np.clip(p, PROB_EPS, 1 - PROB_EPS)
    losses = -(y * np.log(pc) + (1 - y) * np.log1p(-pc))
    return losses, p, pc == p


def loss_and_grad(batch: Sequence, params: ModelParams, l2_lambda: float) -> tuple[float, ModelParams]:
    """Mean binary cross-entropy plus (l2_lambda/2)*||weights||^2, and its gradient.

    Biases are not penalized. Where the probability is clamped the loss is flat,
    so the data gradient there is zero.
    """
    sentences, y = _unzip(batch)
    trace = forward_batch(sentences, params)
    losses, p, unclamped = _bce(trace.logits, y)
    dlogits = np.where(unclamped, p - y, 0.0) / len(y)
    grads = backward_batch(trace, dlogits, params)
    if l2_lambda:
        grads.E += l2_lambda * params.E
        for gW, W in zip(grads.kernels, params.kernels):
            gW += l2_lambda * W
        grads.classifier_w += l2_lambda * params.classifier_w
    return float(losses.mean()) + 0.5 * l2_lambda * _l2(params), grads


def loss(batch: Sequence, params: ModelParams, cfg: TrainConfig | float) -> float:
    lam = cfg.l2_lambda if isinstance(cfg, TrainConfig) else float(cfg)
    sentences, y = _unzip(batch)
    losses, _, _ = _bce(forward_batch(sentences, params).logits, y)
    return float(losses.mean()) + 0.5 * lam * _l2(params)


def backward(batch: Sequence, params: ModelParams, cfg: TrainConfig | float) -> ModelParams:
    lam = cfg.l2_lambda if isinstance(cfg, TrainConfig) else float(cfg)
    return loss_and_grad(batch, params, lam)[1]


def init_params(
    config: ModelConfig,
    vocab,
    seed: int = 0,
    warm_start_E: np.ndarray | None = None,
) -> ModelParams:
    """Glorot-uniform weights, zero biases.

    Each tensor is drawn from U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
    """
    V = vocab if isinstance(vocab, int) else len(vocab)
    rng = np.random.default_rng(seed)
    p, m = config.filters, config.m

    def glorot(shape, fan_in, fan_out):
        a = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=shape)

    E = glorot((V, m), V, m)
    kernels = [glorot((p, m, k), m * k, p * k) for k in config.widths]
    classifier_w = glorot((config.n_features,), config.n_features, 1)
    if warm_start_E is not None:
        warm_start_E = np.asarray(warm_start_E, dtype=np.float64)
        if warm_start_E.shape != (V, m):
            raise ValueError(f"warm start embedding has shape {warm_start_E.shape}, expected {(V, m)}")
        E = warm_start_E.copy()
    return ModelParams(
        E=E,
        kernels=kernels,
        biases=[np.zeros(p) for _ in config.widths],
        classifier_w=classifier_w,
        classifier_b=0.0,
    )


def sgd_step(params: ModelParams, grads: ModelParams, lr: float) -> None:
    params.E -= lr * grads.E
    for W, gW in zip(params.kernels, grads.kernels):
        W -= lr * gW
    for b, gb in zip(params.biases, grads.biases):
        b -= lr * gb
    params.classifier_w -= lr * grads.classifier_w
    params.classifier_b -= lr * grads.classifier_b


def _clip(grads: ModelParams, max_norm: float) -> None:
    norm = math.sqrt(
        sum(float(np.sum(a * a)) for _, a in grads.named_arrays()) + grads.classifier_b**2
    )
    if norm > max_norm:
        scale = max_norm / norm
        for _, a in grads.named_arrays():
            a *= scale
        grads.classifier_b *= scale


def evaluate_params(dataset: Sequence, params: ModelParams) -> dict:
    sentences, y = _unzip(dataset)
    probs = predict_proba_batched(sentences, params)
    return {"accuracy": accuracy(probs, y), "auc": roc_auc(probs, y)}


def sgd_fit(
    train: Sequence,
    dev: Sequence,
    params: ModelParams,
    cfg: TrainConfig = TrainConfig(),
    on_epoch: Callable[[Mapping], None] | None = None,
) -> tuple[ModelParams, list[dict]]:
    """Shuffled mini-batch SGD; returns the epoch snapshot with the best dev accuracy."""
    if not train or not dev:
        raise ValueError("train and dev sets must be non-empty")
    train = list(train)
    rng = np.random.default_rng(cfg.seed)
    lam = cfg.penalty_weight(len(train))
    params = params.copy()
    best_params, best_acc = params.copy(), -1.0
    history = []
    for epoch in range(1, cfg.epochs + 1):
        lr = cfg.learning_rate * cfg.lr_decay ** (epoch - 1)
        order = rng.permutation(len(train))
        total = 0.0
        for start in range(0, len(train), cfg.batch_size):
            batch = [train[i] for i in order[start : start + cfg.batch_size]]
            value, grads = loss_and_grad(batch, params, lam)
            if not math.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite loss {value} at epoch {epoch}, batch starting {start}, lr={lr}"
                )
            if cfg.grad_clip is not None:
                _clip(grads, cfg.grad_clip)
            sgd_step(params, grads, lr)
            total += value * len(batch)
        scores = evaluate_params(dev, params)
        record = {
            "epoch": epoch,
            "train_loss": total / len(train),
            "dev_acc": scores["accuracy"],
            "dev_auc": scores["auc"],
        }
        history.append(record)
        log.debug("epoch %d train_loss=%.5f dev_acc=%.4f", epoch, record["train_loss"], record["dev_acc"])
        if on_epoch is not None:
            on_epoch(record)
        if scores["accuracy"] > best_acc:
            best_acc, best_params = scores["accuracy"], params.copy()
    return best_params, history
