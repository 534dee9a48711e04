import json

import pytest

from deepr.vocab import (
    GAP_TOKENS,
    RAREWORD,
    RAREWORD_ID,
    SPECIAL_TOKENS,
    TRANSFER,
    TRANSFER_ID,
    Vocabulary,
    build_vocab,
)


def test_threshold_100_keeps_frequent_folds_rare():
    corpus = [["F20"]] * 150 + [["Q99"]] * 3
    v = build_vocab(corpus, 100)
    assert "F20" in v and "Q99" not in v
    assert v.encode(["Q99"]) == [RAREWORD_ID]
    assert v.count(RAREWORD) == 3


def test_threshold_zero_keeps_everything():
    v = build_vocab([["a", "b", "c"]], 0)
    assert all(t in v for t in "abc")
    assert len(v) == len(SPECIAL_TOKENS) + 3


def test_all_singletons_leave_only_specials():
    v = build_vocab([[f"T{i}" for i in range(10)]], 2)
    assert len(v) == 7
    assert v.id_to_token == SPECIAL_TOKENS
    assert v.count(RAREWORD) == 10


def test_special_ids_fixed():
    v = build_vocab([["x"] * 3], 1)
    assert v.id(RAREWORD) == 0 and v.id(TRANSFER) == 1
    assert [v.id(g) for g in GAP_TOKENS] == [2, 3, 4, 5, 6]
    assert v.gap_ids == (2, 3, 4, 5, 6) and v.gap_tokens == GAP_TOKENS


def test_specials_never_folded():
    v = build_vocab([[TRANSFER, "1-3m", "a", "a"]], 2)
    assert v.count(TRANSFER) == 1 and v.count("1-3m") == 1
    assert v.count(RAREWORD) == 0


def test_order_is_count_descending_then_lexicographic():
    corpus = [["b", "a", "c", "c", "d", "d"]]
    v = build_vocab(corpus, 0)
    assert v.id_to_token[7:] == ("c", "d", "a", "b")


def test_encode_decode():
    v = build_vocab([["F20", "F20"]], 1)
    assert v.encode(["F20"]) == [v.id("F20")]
    assert v.decode(v.encode(["F20", TRANSFER])) == ["F20", TRANSFER]
    assert v.encode(["UNSEEN"]) == [0]
    with pytest.raises(IndexError):
        v.decode([len(v)])
    with pytest.raises(IndexError):
        v.decode([-1])


def test_empty_corpus_raises():
    with pytest.raises(ValueError, match="empty corpus"):
        build_vocab([], 1)


def test_rebuild_is_identical():
    corpus = [["x", "y", "z", "y"], ["z", "w"]]
    assert build_vocab(corpus, 1) == build_vocab(corpus, 1)
    assert build_vocab(corpus, 1).hash == build_vocab(list(corpus), 1).hash


def test_json_format_and_round_trip(tmp_path):
    v = build_vocab([["F20"] * 4 + ["Q99"]], 2)
    obj = v.to_json()
    assert obj["header"]["rare_threshold"] == 2 and obj["header"]["version"] == 1
    assert obj["tokens"]["F20"] == [v.id("F20"), 4]
    path = tmp_path / "v.json"
    v.save(path)
    w = Vocabulary.load(path)
    assert w == v and w.hash == v.hash and w.token_to_id == v.token_to_id
    assert json.loads(path.read_text())["header"]["hash"] == v.hash


def test_hash_tracks_id_space():
    a = build_vocab([["x", "y"]], 0)
    b = build_vocab([["x", "z"]], 0)
    assert a.hash != b.hash


def test_rejects_bad_files():
    v = build_vocab([["x"]], 0)
    obj = v.to_json()
    obj["header"]["version"] = 99
    with pytest.raises(ValueError):
        Vocabulary.from_json(obj)
    obj = v.to_json()
    obj["tokens"]["x"][0] = 40
    with pytest.raises(ValueError):
        Vocabulary.from_json(obj)
