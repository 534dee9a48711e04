import math

import numpy as np
import pytest
from conftest import make_sentence, random_params

from deepr.model import (
    PAD_ID,
    ModelConfig,
    ModelParams,
    convolve_relu,
    embed,
    forward,
    forward_batch,
    max_pool,
    pad_ids,
    predict_proba,
    predict_proba_batched,
)


def loop_conv(X, W, b):
    p, m, k = W.shape
    out = np.zeros((X.shape[0] - k + 1, p))
    for t in range(out.shape[0]):
        for f in range(p):
            acc = b[f]
            for j in range(k):
                for c in range(m):
                    acc += W[f, c, j] * X[t + j, c]
            out[t, f] = max(acc, 0.0)
    return out


# embed


def test_embed_lookup(rng):
    params = random_params(rng, 5, 3, 2, (2,))
    X = embed([4, 4], params)
    assert np.array_equal(X[0], X[1]) and np.array_equal(X[0], params.E[4])
    assert np.array_equal(embed([2], params), params.E[[2]])
    params.E[:] = 0
    assert not embed([1, 2, 3], params).any()


def test_embed_pad_rows_are_zero(rng):
    params = random_params(rng, 5, 3, 2, (2,))
    X = embed([PAD_ID, 1], params)
    assert not X[0].any() and np.array_equal(X[1], params.E[1])
    with pytest.raises(IndexError):
        embed([5], params)


# convolution and pooling


def test_convolve_zero_kernel():
    X = np.ones((4, 2))
    assert not convolve_relu(X, np.zeros((2, 2, 3)), np.zeros(2)).any()
    R = convolve_relu(X, np.zeros((2, 2, 3)), np.array([1.0, -1.0]))
    assert np.array_equal(R, np.tile([1.0, 0.0], (2, 1)))


def test_convolve_matches_loop(rng):
    X, W, b = rng.normal(size=(5, 2)), rng.normal(size=(1, 2, 3)), rng.normal(size=1)
    np.testing.assert_allclose(convolve_relu(X, W, b), loop_conv(X, W, b), rtol=0, atol=1e-12)


def test_convolve_requires_length():
    with pytest.raises(ValueError):
        convolve_relu(np.ones((2, 2)), np.ones((1, 2, 3)), np.zeros(1))


def test_max_pool_examples():
    pooled, arg = max_pool(np.array([[1.0, 5.0], [3.0, 2.0]]))
    assert pooled.tolist() == [3.0, 5.0] and arg.tolist() == [1, 0]
    row = np.array([[0.5, 2.0]])
    assert max_pool(row)[0].tolist() == [0.5, 2.0]
    R = np.array([[1.0, 5.0], [3.0, 2.0], [3.0, 2.0]])
    p2, a2 = max_pool(R)
    assert p2.tolist() == [3.0, 5.0] and a2.tolist() == [1, 0]


def test_max_pool_ties_pick_first():
    assert max_pool(np.zeros((4, 3)))[1].tolist() == [0, 0, 0]


# forward


def test_zero_params_give_one_half():
    params = ModelParams.zeros(ModelConfig(m=3, widths=(2, 3), filters=2), 6)
    assert forward([1, 2, 3], params).probability == 0.5


def test_single_window_pools_single_row(rng):
    params = random_params(rng, 6, 3, 4, (3,))
    tr = forward([1, 2, 3], params)
    assert tr.post[0].shape == (1, 4)
    assert np.array_equal(tr.pooled, tr.post[0][0])


def test_tiny_hand_computation():
    params = ModelParams(
        E=np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 2.0]]),
        kernels=[np.array([[[1.0, 0.5], [2.0, -1.0]]])],
        biases=[np.array([0.1])],
        classifier_w=np.array([0.5]),
        classifier_b=-1.0,
    )
    tr = forward([2, 3, 0], params)
    # windows: (1,1)(-1,2) -> 1+2-0.5-2+0.1 = 0.6 ; (-1,2)(1,0) -> -1+4+0.5+0.1 = 3.6
    np.testing.assert_allclose(tr.post[0][:, 0], [0.6, 3.6], atol=1e-15)
    assert tr.argmax[0].tolist() == [1]
    assert tr.probability == pytest.approx(1 / (1 + math.exp(-(0.5 * 3.6 - 1.0))), abs=1e-15)


def test_short_sentences_are_left_padded(rng):
    params = random_params(rng, 6, 3, 2, (2, 4))
    tr = forward([5], params)
    assert tr.n_pad == 3 and tr.ids.tolist() == [PAD_ID] * 3 + [5]
    assert [r.shape[0] for r in tr.post] == [3, 1]
    ids, n = pad_ids(np.array([1, 2, 3, 4, 5]), 4)
    assert n == 0 and ids.tolist() == [1, 2, 3, 4, 5]


def test_pad_matches_explicit_zero_row(rng):
    params = random_params(rng, 6, 3, 2, (3,))
    ext = ModelParams(
        E=np.vstack([params.E, np.zeros(3)]),
        kernels=params.kernels,
        biases=params.biases,
        classifier_w=params.classifier_w,
        classifier_b=params.classifier_b,
    )
    assert forward([4], params).probability == forward([6, 6, 4], ext).probability


def test_empty_sentence_raises(rng):
    with pytest.raises(ValueError, match="empty sentence"):
        forward([], random_params(rng, 4, 2, 1, (2,)))


def test_config_mismatch_raises(rng):
    params = random_params(rng, 4, 2, 1, (2,))
    with pytest.raises(ValueError):
        forward([1, 2], params, ModelConfig(m=3, widths=(2,), filters=1))


def test_param_shape_validation():
    with pytest.raises(ValueError):
        ModelParams(np.zeros((4, 2)), [np.zeros((1, 3, 2))], [np.zeros(1)], np.zeros(1))
    with pytest.raises(ValueError):
        ModelParams(np.zeros((4, 2)), [np.zeros((1, 2, 2))], [np.zeros(1)], np.zeros(2))
    with pytest.raises(ValueError):
        ModelConfig(widths=())


def test_batched_forward_agrees_with_per_sentence(rng):
    params = random_params(rng, 20, 5, 3, (2, 3, 5))
    sents = [make_sentence(rng.integers(0, 20, size=rng.integers(1, 15))) for _ in range(40)]
    np.testing.assert_allclose(predict_proba_batched(sents, params, batch_size=7), predict_proba(sents, params), rtol=1e-13)
    bt = forward_batch(sents, params)
    for s, pooled in zip(sents, bt.pooled):
        np.testing.assert_allclose(pooled, forward(s, params).pooled, rtol=1e-13, atol=1e-14)


def test_params_helpers(rng):
    params = random_params(rng, 4, 2, 3, (2, 3))
    c = params.copy()
    c.E[0, 0] += 1
    assert params.E[0, 0] != c.E[0, 0]
    assert [n for n, _ in params.named_arrays()] == ["E", "W2", "W3", "b2", "b3", "classifier_w"]
    assert params.config == ModelConfig(m=2, widths=(2, 3), filters=3)
    assert params.all_finite()
    params.kernels[0][0, 0, 0] = np.nan
    assert not params.all_finite()
    z = params.zeros_like()
    assert not any(a.any() for _, a in z.named_arrays())
