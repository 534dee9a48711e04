"""Versioned JSON checkpoints: config, vocabulary (with hash) and every tensor.

Tensors are stored row-major with their shapes. Floats are written with
``repr`` precision, so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import ModelParams
from .vocab import Vocabulary

FORMAT = "deepr-checkpoint"
VERSION = 1


def _tensor(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": a.ravel(order="C").tolist()}


def _array(obj: dict) -> np.ndarray:
    return np.asarray(obj["data"], dtype=np.float64).reshape(obj["shape"])


def checkpoint_to_json(params: ModelParams, vocab: Vocabulary, meta: dict | None = None) -> dict:
    if params.vocab_size != len(vocab):
        raise ValueError(f"embedding has {params.vocab_size} rows but vocabulary has {len(vocab)} tokens")
    cfg = params.config
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": {"m": cfg.m, "widths": list(cfg.widths), "filters": cfg.filters},
        "vocab_hash": vocab.hash,
        "vocab": vocab.to_json(),
        "tensors": {
            "E": _tensor(params.E),
            "kernels": [_tensor(W) for W in params.kernels],
            "biases": [_tensor(b) for b in params.biases],
            "classifier_w": _tensor(params.classifier_w),
            "classifier_b": params.classifier_b,
        },
        "meta": meta or {},
    }


def checkpoint_from_json(obj: dict) -> tuple[ModelParams, Vocabulary, dict]:
    if obj.get("format") != FORMAT or obj.get("version") != VERSION:
        raise ValueError(f"not a {FORMAT} v{VERSION} file")
    vocab = Vocabulary.from_json(obj["vocab"])
    if vocab.hash != obj["vocab_hash"]:
        raise ValueError("checkpoint vocabulary does not match its recorded hash")
    t = obj["tensors"]
    params = ModelParams(
        E=_array(t["E"]),
        kernels=[_array(w) for w in t["kernels"]],
        biases=[_array(b) for b in t["biases"]],
        classifier_w=_array(t["classifier_w"]),
        classifier_b=float(t["classifier_b"]),
    )
    if list(params.widths) != obj["config"]["widths"]:
        raise ValueError("checkpoint tensors disagree with its config")
    return params, vocab, obj.get("meta", {})


def save_checkpoint(path: str | Path, params: ModelParams, vocab: Vocabulary, meta: dict | None = None) -> None:
    Path(path).write_text(json.dumps(checkpoint_to_json(params, vocab, meta)))


def load_checkpoint(path: str | Path) -> tuple[ModelParams, Vocabulary, dict]:
    return checkpoint_from_json(json.loads(Path(path).read_text()))
