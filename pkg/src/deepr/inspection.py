"""Looking inside a trained model: motif hits, frequent motifs, similarities, 2-D projection."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .model import ForwardTrace, ModelParams, forward


@dataclass(frozen=True)
class MotifHit:
    """One positive filter response.

    ``filter_index`` indexes the pooled patient vector (width blocks in order).
    ``position`` is where the window starts in the unpadded sentence and is
    negative when the window begins in the left padding; PAD shows up as -1
    in ``token_window``.
    """

    filter_index: int
    width: int
    position: int
    token_window: tuple[int, ...]
    response: float
    sentence_ref: str = ""


@dataclass(frozen=True)
class MotifSummary:
    token_window: tuple[int, ...]
    filter_index: int
    width: int
    occurrence_count: int
    mean_response: float
    class_association: float


def motif_responses(sentence, params: ModelParams, trace: ForwardTrace | None = None) -> list[MotifHit]:
    if trace is None:
        trace = forward(sentence, params)
    ref = getattr(sentence, "patient_id", "")
    hits = []
    offset = 0
    for k, R in zip(trace.widths, trace.post):
        ts, fs = np.nonzero(R > 0)
        for t, f in zip(ts.tolist(), fs.tolist()):
            hits.append(
                MotifHit(
                    filter_index=offset + f,
                    width=k,
                    position=t - trace.n_pad,
                    token_window=tuple(trace.ids[t : t + k].tolist()),
                    response=float(R[t, f]),
                    sentence_ref=ref,
                )
            )
        offset += R.shape[1]
    return hits


def _labelled(dataset: Iterable) -> Iterable[tuple[object, int]]:
    for item in dataset:
        if isinstance(item, tuple) and len(item) == 2:
            yield item
        else:
            yield item, item.label


def mine_motifs(
    dataset: Iterable,
    params: ModelParams,
    top_per_filter: int = 3,
    min_count: int = 5,
) -> list[MotifSummary]:
    """Group hits by (filter, token window), keep frequent groups, rank by mean response.

    Ties on mean response go to the more frequent window, then to the smaller
    window in lexicographic id order. ``class_association`` is the fraction
    of a group's occurrences that come from positively labelled sentences.
    """
    widths = params.widths
    windows: list[list[np.ndarray]] = [[] for _ in widths]
    responses: list[list[np.ndarray]] = [[] for _ in widths]
    labels: list[list[np.ndarray]] = [[] for _ in widths]
    for sentence, label in _labelled(dataset):
        trace = forward(sentence, params)
        for i, (k, R) in enumerate(zip(widths, trace.post)):
            windows[i].append(np.lib.stride_tricks.sliding_window_view(trace.ids, k))
            responses[i].append(R)
            labels[i].append(np.full(len(R), float(label == 1)))

    out = []
    offset = 0
    for i, k in enumerate(widths):
        p = params.kernels[i].shape[0]
        if not windows[i]:
            offset += p
            continue
        win = np.concatenate(windows[i])
        R = np.concatenate(responses[i])
        y = np.concatenate(labels[i])
        uniq, group = np.unique(win, axis=0, return_inverse=True)
        group = group.ravel()
        G = sparse.csr_matrix((np.ones(len(group)), (group, np.arange(len(group)))), shape=(len(uniq), len(group)))
        hit = (R > 0).astype(np.float64)
        counts = np.rint(G @ hit).astype(np.int64)
        sums = G @ R
        positive = G @ (hit * y[:, None])
        for f in range(p):
            keep = np.flatnonzero(counts[:, f] >= max(min_count, 1))
            if len(keep) == 0:
                continue
            n = counts[keep, f]
            mean = sums[keep, f] / n
            keys = [uniq[keep, j] for j in reversed(range(k))] + [-n, -mean]
            for j in keep[np.lexsort(keys)][:top_per_filter]:
                c = int(counts[j, f])
                out.append(
                    MotifSummary(
                        token_window=tuple(int(t) for t in uniq[j]),
                        filter_index=offset + f,
                        width=k,
                        occurrence_count=c,
                        mean_response=float(sums[j, f] / c),
                        class_association=float(positive[j, f] / c),
                    )
                )
        offset += p
    return out


def word_similarity(w: int, v: int, params: ModelParams) -> float:
    a, b = params.E[w], params.E[v]
    sa, sb = np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0)
    if sa == 0 or sb == 0:
        raise ValueError("cosine similarity is undefined for a zero embedding")
    a, b = a / sa, b / sb  # rescale so squares neither overflow nor underflow
    aa, bb = float(a @ a), float(b @ b)
    return float(np.clip(a @ b / np.sqrt(aa * bb), -1.0, 1.0))


def nearest_words(w: int, params: ModelParams, k: int = 5, exclude: Sequence[int] = ()) -> list[tuple[int, float]]:
    E = params.E
    norms = np.linalg.norm(E, axis=1)
    if norms[w] == 0:
        raise ValueError("cosine similarity is undefined for a zero embedding")
    with np.errstate(invalid="ignore", divide="ignore"):
        sims = E @ E[w] / (norms * norms[w])
    sims[norms == 0] = -np.inf
    sims[w] = -np.inf
    sims[list(exclude)] = -np.inf
    order = np.argsort(-sims, kind="stable")[:k]
    return [(int(i), float(sims[i])) for i in order]


def patient_vector(sentence, params: ModelParams) -> np.ndarray:
    return forward(sentence, params).pooled


def nearest_patients(query: np.ndarray, vectors: np.ndarray, k: int = 10, exclude: int | None = None) -> np.ndarray:
    """Indices of the ``k`` rows of ``vectors`` closest to ``query`` in Euclidean distance."""
    d = np.linalg.norm(vectors - query[None, :], axis=1)
    if exclude is not None:
        d[exclude] = np.inf
    return np.argsort(d, kind="stable")[:k]


def _top_eigvec(C: np.ndarray, start: np.ndarray, orth: np.ndarray | None, tol: float, max_iter: int, scale: float):
    # residuals are measured on the operator restricted to the complement of
    # ``orth``, so rounding left behind by deflation does not stall the test
    v = start / np.linalg.norm(start)
    lam = 0.0
    for _ in range(max_iter):
        w = C @ v
        if orth is not None:
            w -= (orth @ w) * orth
        n = np.linalg.norm(w)
        if n <= 1e-14 * scale:
            return np.zeros_like(v), 0.0
        w /= n
        Cw = C @ w
        lam = float(w @ Cw)
        r = Cw - lam * w
        if orth is not None:
            r -= (orth @ r) * orth
        if np.linalg.norm(r) <= tol * scale:
            return w, lam
        v = w
    warnings.warn("power iteration did not converge", RuntimeWarning)
    return v, lam


def project_2d(vectors, tol: float = 1e-9, max_iter: int = 100000) -> tuple[np.ndarray, np.ndarray]:
    """Mean-centred projection on the top two principal axes.

    Axes come from power iteration on the covariance, the second after
    deflating the first. Each axis is signed so its largest-magnitude
    loading is positive. Returns (points (N, 2), axes (2, D)). A missing
    second direction (rank-1 data) yields a zero axis and a warning.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two vectors")
    Xc = X - X.mean(axis=0)
    C = Xc.T @ Xc / X.shape[0]
    D = C.shape[0]
    start = np.random.default_rng(0).standard_normal(D)
    axes = np.zeros((2, D))
    scale = max(float(np.abs(C).max()), np.finfo(float).tiny)
    v1, lam1 = _top_eigvec(C, start, None, tol, max_iter, scale)
    if lam1 > 0:
        axes[0] = _sign_fix(v1)
        C2 = C - lam1 * np.outer(axes[0], axes[0])
        v2, lam2 = _top_eigvec(C2, start, axes[0], tol, max_iter, scale)
        if lam2 > 1e-12 * lam1:
            v2 -= (axes[0] @ v2) * axes[0]
            axes[1] = _sign_fix(v2 / np.linalg.norm(v2))
    if not axes[1].any():
        warnings.warn("data has rank < 2; second component set to zero", RuntimeWarning)
    return Xc @ axes.T, axes


def _sign_fix(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v
