"""Token vocabulary with frequency-based rare-word folding."""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

RAREWORD = "RAREWORD"
TRANSFER = "TRANSFER"
GAP_TOKENS = ("0-1m", "1-3m", "3-6m", "6-12m", "12m+")
SPECIAL_TOKENS = (RAREWORD, TRANSFER) + GAP_TOKENS

RAREWORD_ID = 0
TRANSFER_ID = 1
VOCAB_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Vocabulary:
    """Immutable token <-> id mapping.

    Special tokens occupy the lowest ids in a fixed order (RAREWORD=0,
    TRANSFER=1, then the gap tokens), so checkpoints trained on different
    corpora share the same special-token ids.
    """

    id_to_token: tuple[str, ...]
    counts: tuple[int, ...]
    rare_threshold: int
    n_special: int = len(SPECIAL_TOKENS)
    token_to_id: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.id_to_token) != len(self.counts):
            raise ValueError("id_to_token and counts differ in length")
        mapping = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(mapping) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")
        object.__setattr__(self, "token_to_id", mapping)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    @property
    def specials(self) -> tuple[str, ...]:
        return self.id_to_token[: self.n_special]

    @property
    def gap_tokens(self) -> tuple[str, ...]:
        return self.id_to_token[2 : self.n_special]

    @property
    def gap_ids(self) -> tuple[int, ...]:
        return tuple(range(2, self.n_special))

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, RAREWORD_ID)

    def count(self, token: str) -> int:
        return self.counts[self.token_to_id[token]]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        get = self.token_to_id.get
        return [get(t, RAREWORD_ID) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        out = []
        for i in ids:
            if not 0 <= i < len(self.id_to_token):
                raise IndexError(f"token id {i} outside vocabulary of size {len(self)}")
            out.append(self.id_to_token[i])
        return out

    @property
    def hash(self) -> str:
        """Digest of the id space; two vocabularies with equal hashes encode identically."""
        payload = json.dumps(
            {"tokens": list(self.id_to_token), "n_special": self.n_special},
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def to_json(self) -> dict:
        return {
            "header": {
                "rare_threshold": self.rare_threshold,
                "version": VOCAB_FORMAT_VERSION,
                "n_special": self.n_special,
                "hash": self.hash,
            },
            "tokens": {tok: [i, c] for i, (tok, c) in enumerate(zip(self.id_to_token, self.counts))},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        header = obj["header"]
        if header.get("version") != VOCAB_FORMAT_VERSION:
            raise ValueError(f"unsupported vocabulary version {header.get('version')!r}")
        entries = sorted(obj["tokens"].items(), key=lambda kv: kv[1][0])
        ids = [v[0] for _, v in entries]
        if ids != list(range(len(entries))):
            raise ValueError("vocabulary ids are not dense")
        return cls(
            id_to_token=tuple(tok for tok, _ in entries),
            counts=tuple(int(v[1]) for _, v in entries),
            rare_threshold=int(header["rare_threshold"]),
            n_special=int(header.get("n_special", len(SPECIAL_TOKENS))),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_json(json.loads(Path(path).read_text()))


def build_vocab(
    corpus: Iterable[Sequence[str]],
    rare_threshold: int = 100,
    specials: Sequence[str] = SPECIAL_TOKENS,
) -> Vocabulary:
    """Count tokens over ``corpus`` and fold those seen fewer than ``rare_threshold`` times.

    Folded occurrences are added to the RAREWORD count. Special tokens are
    always present and never folded. Kept tokens are ordered by descending
    count, ties broken lexicographically.
    """
    if list(specials[:2]) != [RAREWORD, TRANSFER]:
        raise ValueError("specials must start with RAREWORD, TRANSFER")
    counts: Counter[str] = Counter()
    n_sentences = 0
    for tokens in corpus:
        n_sentences += 1
        counts.update(tokens)
    if n_sentences == 0:
        raise ValueError("empty corpus")

    special_set = set(specials)
    kept = []
    folded = 0
    for tok, c in counts.items():
        if tok in special_set:
            continue
        if c >= rare_threshold:
            kept.append((tok, c))
        else:
            folded += c
    kept.sort(key=lambda tc: (-tc[1], tc[0]))

    special_counts = [counts.get(s, 0) for s in specials]
    special_counts[0] += folded
    return Vocabulary(
        id_to_token=tuple(specials) + tuple(t for t, _ in kept),
        counts=tuple(special_counts) + tuple(c for _, c in kept),
        rare_threshold=rare_threshold,
        n_special=len(specials),
    )
