import json

import numpy as np
import pytest
from conftest import random_params

from deepr.checkpoint import checkpoint_from_json, checkpoint_to_json, load_checkpoint, save_checkpoint
from deepr.vocab import build_vocab


def vocab_of_size(n):
    return build_vocab([[f"T{i}" for i in range(n - 7)]], 0)


def test_round_trip_is_bit_exact(tmp_path, rng):
    vocab = vocab_of_size(12)
    params = random_params(rng, 12, 4, 3, (3, 4, 5))
    path = tmp_path / "ck.json"
    save_checkpoint(path, params, vocab, {"note": 1})
    got, v, meta = load_checkpoint(path)
    assert v == vocab and meta == {"note": 1}
    for (_, a), (_, b) in zip(params.named_arrays(), got.named_arrays()):
        assert a.shape == b.shape and np.array_equal(a, b)
    assert got.classifier_b == params.classifier_b


def test_layout_is_row_major_with_shapes(rng):
    vocab = vocab_of_size(8)
    params = random_params(rng, 8, 2, 1, (2,))
    obj = checkpoint_to_json(params, vocab)
    assert obj["vocab_hash"] == vocab.hash and obj["config"] == {"m": 2, "widths": [2], "filters": 1}
    W = obj["tensors"]["kernels"][0]
    assert W["shape"] == [1, 2, 2] and W["data"] == params.kernels[0].ravel().tolist()


def test_rejects_mismatches(rng):
    vocab = vocab_of_size(8)
    params = random_params(rng, 8, 2, 1, (2,))
    with pytest.raises(ValueError):
        checkpoint_to_json(params, vocab_of_size(9))
    obj = json.loads(json.dumps(checkpoint_to_json(params, vocab)))
    obj["vocab_hash"] = "0" * 16
    with pytest.raises(ValueError, match="hash"):
        checkpoint_from_json(obj)
    obj = checkpoint_to_json(params, vocab)
    obj["version"] = 2
    with pytest.raises(ValueError):
        checkpoint_from_json(obj)
