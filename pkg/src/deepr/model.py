"""Embedding -> multi-width convolution + ReLU -> max-over-time pooling -> logistic unit.

Sentences shorter than the widest kernel are left-padded with a PAD symbol
whose embedding is the zero vector. PAD has no row in ``E``; it is
represented by id ``PAD_ID`` (-1) in padded id arrays and token windows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.special import expit

PAD_ID = -1


@dataclass(frozen=True)
class ModelConfig:
    m: int = 100
    widths: tuple[int, ...] = (3, 4, 5)
    filters: int = 100

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(k) for k in self.widths))
        if self.m < 1 or self.filters < 1:
            raise ValueError("m and filters must be >= 1")
        if not self.widths or min(self.widths) < 1:
            raise ValueError("widths must be non-empty and >= 1")

    @property
    def max_width(self) -> int:
        return max(self.widths)

    @property
    def n_features(self) -> int:
        return self.filters * len(self.widths)


@dataclass
class ModelParams:
    """All trainable tensors.

    ``kernels[i]`` has shape (p, m, k) for ``widths[i] == k``;
    ``kernels[i][:, :, j]`` multiplies the j-th token of a window.
    """

    E: np.ndarray
    kernels: list[np.ndarray]
    biases: list[np.ndarray]
    classifier_w: np.ndarray
    classifier_b: float = 0.0

    def __post_init__(self):
        V, m = self.E.shape
        if len(self.kernels) != len(self.biases):
            raise ValueError("one bias vector per kernel required")
        p = self.kernels[0].shape[0]
        for W, b in zip(self.kernels, self.biases):
            if W.ndim != 3 or W.shape[0] != p or W.shape[1] != m or b.shape != (p,):
                raise ValueError(f"inconsistent kernel {W.shape} / bias {b.shape} for m={m}, p={p}")
        if self.classifier_w.shape != (p * len(self.kernels),):
            raise ValueError("classifier_w length must equal filters * len(widths)")
        self.classifier_b = float(self.classifier_b)

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(W.shape[2] for W in self.kernels)

    @property
    def vocab_size(self) -> int:
        return self.E.shape[0]

    @property
    def config(self) -> ModelConfig:
        return ModelConfig(m=self.E.shape[1], widths=self.widths, filters=self.kernels[0].shape[0])

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        """Array-valued tensors in a fixed order; the scalar classifier bias is excluded."""
        yield "E", self.E
        for k, W in zip(self.widths, self.kernels):
            yield f"W{k}", W
        for k, b in zip(self.widths, self.biases):
            yield f"b{k}", b
        yield "classifier_w", self.classifier_w

    def penalized_arrays(self) -> Iterator[np.ndarray]:
        yield self.E
        yield from self.kernels
        yield self.classifier_w

    def copy(self) -> "ModelParams":
        return ModelParams(
            E=self.E.copy(),
            kernels=[W.copy() for W in self.kernels],
            biases=[b.copy() for b in self.biases],
            classifier_w=self.classifier_w.copy(),
            classifier_b=self.classifier_b,
        )

    def zeros_like(self) -> "ModelParams":
        return ModelParams(
            E=np.zeros_like(self.E),
            kernels=[np.zeros_like(W) for W in self.kernels],
            biases=[np.zeros_like(b) for b in self.biases],
            classifier_w=np.zeros_like(self.classifier_w),
            classifier_b=0.0,
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for _, a in self.named_arrays()) and np.isfinite(
            self.classifier_b
        )

    @classmethod
    def zeros(cls, config: ModelConfig, vocab_size: int) -> "ModelParams":
        p, m = config.filters, config.m
        return cls(
            E=np.zeros((vocab_size, m)),
            kernels=[np.zeros((p, m, k)) for k in config.widths],
            biases=[np.zeros(p) for _ in config.widths],
            classifier_w=np.zeros(config.n_features),
        )


# Gradients share the exact layout of the parameters they differentiate.
Gradients = ModelParams


@dataclass
class ForwardTrace:
    """Every intermediate of one forward pass.

    Positions in ``pre``/``post``/``argmax`` index the padded sentence;
    subtract ``n_pad`` to get positions in the original sentence.
    """

    ids: np.ndarray
    n_pad: int
    embedded: np.ndarray
    pre: list[np.ndarray]
    post: list[np.ndarray]
    argmax: list[np.ndarray]
    pooled: np.ndarray
    logit: float
    probability: float
    widths: tuple[int, ...] = field(default=())


def _ids_of(sentence) -> np.ndarray:
    tokens = getattr(sentence, "tokens", sentence)
    return np.asarray(tokens, dtype=np.int64)


def pad_ids(ids: np.ndarray, max_width: int) -> tuple[np.ndarray, int]:
    n_pad = max(0, max_width - len(ids))
    if n_pad:
        ids = np.concatenate([np.full(n_pad, PAD_ID, dtype=np.int64), ids])
    return ids, n_pad


def embed(sentence, params: ModelParams) -> np.ndarray:
    """Look up one embedding row per token; PAD ids map to zero rows."""
    ids = _ids_of(sentence)
    if ids.size and ids.max() >= params.vocab_size:
        raise IndexError(f"token id {ids.max()} outside vocabulary of size {params.vocab_size}")
    X = np.zeros((len(ids), params.E.shape[1]))
    real = ids != PAD_ID
    X[real] = params.E[ids[real]]
    return X


def convolve_pre(X: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Valid convolution before the rectifier: row t is b + sum_j W[:, :, j] @ X[t + j]."""
    p, m, k = W.shape
    T = X.shape[0]
    if T < k:
        raise ValueError(f"sequence of length {T} is shorter than kernel width {k}")
    windows = np.lib.stride_tricks.sliding_window_view(X, k, axis=0)  # (T-k+1, m, k)
    return windows.reshape(T - k + 1, m * k) @ W.reshape(p, m * k).T + b


def convolve_relu(X: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.maximum(convolve_pre(X, W, b), 0.0)


def max_pool(R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise max and the first row attaining it."""
    if R.shape[0] < 1:
        raise ValueError("cannot pool an empty response matrix")
    argmax = np.argmax(R, axis=0)
    return R[argmax, np.arange(R.shape[1])], argmax


def forward(sentence, params: ModelParams, config: ModelConfig | None = None) -> ForwardTrace:
    if config is not None and config != params.config:
        raise ValueError(f"config {config} does not match parameters {params.config}")
    ids = _ids_of(sentence)
    if ids.size == 0:
        raise ValueError("empty sentence")
    widths = params.widths
    ids, n_pad = pad_ids(ids, max(widths))
    X = embed(ids, params)
    pre, post, argmax, pooled = [], [], [], []
    for W, b in zip(params.kernels, params.biases):
        z = convolve_pre(X, W, b)
        r = np.maximum(z, 0.0)
        pool, arg = max_pool(r)
        pre.append(z)
        post.append(r)
        argmax.append(arg)
        pooled.append(pool)
    zbar = np.concatenate(pooled)
    logit = float(zbar @ params.classifier_w + params.classifier_b)
    return ForwardTrace(
        ids=ids,
        n_pad=n_pad,
        embedded=X,
        pre=pre,
        post=post,
        argmax=argmax,
        pooled=zbar,
        logit=logit,
        probability=float(expit(logit)),
        widths=widths,
    )


def predict_proba(sentences: Sequence, params: ModelParams) -> np.ndarray:
    return np.array([forward(s, params).probability for s in sentences])


# ---------------------------------------------------------------------------
# batched path used by training


@dataclass
class _WidthTrace:
    starts: np.ndarray  # (n_win,) packed index of each window's first token
    row_offset: np.ndarray  # (B,) index of each sentence's first window
    flat: np.ndarray  # (n_win, k*m) windows, token-major
    argmax: np.ndarray  # (B, p) window position within the sentence
    pre_at_max: np.ndarray  # (B, p)


@dataclass
class BatchTrace:
    """Packed layout: the padded sentences of a batch laid end to end.

    Only windows lying inside one sentence are convolved, so each sentence
    is processed exactly as it would be alone.
    """

    ids: np.ndarray  # (N,) packed ids, PAD_ID for padding
    widths: list[_WidthTrace]
    pooled: np.ndarray  # (B, n_features)
    logits: np.ndarray  # (B,)


def pack_batch(batch: Sequence, max_width: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Left-pad each sentence to ``max_width`` and concatenate; returns ids, offsets, lengths."""
    seqs = []
    for s in batch:
        ids = _ids_of(s)
        if ids.size == 0:
            raise ValueError("empty sentence")
        seqs.append(pad_ids(ids, max_width)[0])
    lengths = np.array([len(s) for s in seqs])
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    return np.concatenate(seqs), offsets, lengths


def _kernel_matrix(W: np.ndarray) -> np.ndarray:
    """(p, m, k) kernel as a (p, k*m) matrix matching token-major windows."""
    p, m, k = W.shape
    return W.transpose(0, 2, 1).reshape(p, k * m)


def forward_batch(batch: Sequence, params: ModelParams) -> BatchTrace:
    ids, offsets, lengths = pack_batch(batch, max(params.widths))
    B = len(lengths)
    m = params.E.shape[1]
    E_ext = np.vstack([params.E, np.zeros((1, m))])
    X = E_ext[ids]  # PAD_ID == -1 selects the zero row
    traces, pooled = [], []
    for W, b in zip(params.kernels, params.biases):
        p, _, k = W.shape
        n_per = lengths - k + 1
        row_offset = np.concatenate([[0], np.cumsum(n_per)[:-1]])
        seg = np.repeat(np.arange(B), n_per)
        local = np.arange(n_per.sum()) - row_offset[seg]
        starts = offsets[seg] + local
        flat = X[starts[:, None] + np.arange(k)].reshape(-1, k * m)
        z = flat @ _kernel_matrix(W).T + b  # (n_win, p)
        R = np.full((B, n_per.max(), p), -np.inf)
        R[seg, local] = np.maximum(z, 0.0)
        arg = np.argmax(R, axis=1)  # (B, p)
        at = row_offset[:, None] + arg
        cols = np.arange(p)[None, :]
        traces.append(_WidthTrace(starts, row_offset, flat, arg, z[at, cols]))
        pooled.append(np.maximum(z[at, cols], 0.0))
    zbar = np.concatenate(pooled, axis=1)
    logits = zbar @ params.classifier_w + params.classifier_b
    return BatchTrace(ids, traces, zbar, logits)


def scatter_add_rows(n_rows: int, rows: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Sum ``values[i]`` into row ``rows[i]`` of a zero (n_rows, d) array.

    Uses a stable sort plus ``np.add.reduceat`` so the summation order is fixed.
    """
    out = np.zeros((n_rows, values.shape[1]))
    if rows.size == 0:
        return out
    order = np.argsort(rows, kind="stable")
    rows_sorted = rows[order]
    starts = np.flatnonzero(np.r_[True, rows_sorted[1:] != rows_sorted[:-1]])
    out[rows_sorted[starts]] = np.add.reduceat(values[order], starts, axis=0)
    return out


def backward_batch(trace: BatchTrace, dlogits: np.ndarray, params: ModelParams) -> Gradients:
    """Gradients of sum_i dlogits[i] * logit_i with respect to every parameter.

    Max-pooling routes gradient only to the argmax position; ReLU passes it
    only where the pre-activation is strictly positive.
    """
    grads = params.zeros_like()
    grads.classifier_w = trace.pooled.T @ dlogits
    grads.classifier_b = float(dlogits.sum())
    dpooled = dlogits[:, None] * params.classifier_w[None, :]  # (B, n_features)

    m = params.E.shape[1]
    dX = np.zeros((len(trace.ids), m))
    offset = 0
    for i, (W, wt) in enumerate(zip(params.kernels, trace.widths)):
        p, _, k = W.shape
        g = dpooled[:, offset : offset + p] * (wt.pre_at_max > 0)  # (B, p)
        offset += p
        grads.biases[i] = g.sum(axis=0)
        # gradient wrt pre-activations, non-zero only at each argmax window
        D = np.zeros((len(wt.starts), p))
        D[wt.row_offset[:, None] + wt.argmax, np.arange(p)[None, :]] = g
        grads.kernels[i] = np.ascontiguousarray((D.T @ wt.flat).reshape(p, k, m).transpose(0, 2, 1))
        dflat = (D @ _kernel_matrix(W)).reshape(-1, k, m)
        for j in range(k):
            # window starts are distinct, so each index appears once per j
            dX[wt.starts + j] += dflat[:, j, :]
    keep = trace.ids != PAD_ID
    grads.E = scatter_add_rows(params.vocab_size, trace.ids[keep], dX[keep])
    return grads


def predict_proba_batched(sentences: Sequence, params: ModelParams, batch_size: int = 256) -> np.ndarray:
    """Same probabilities as :func:`forward` up to float rounding, computed in batches."""
    out = [
        expit(forward_batch(sentences[i : i + batch_size], params).logits)
        for i in range(0, len(sentences), batch_size)
    ]
    return np.concatenate(out) if out else np.zeros(0)
