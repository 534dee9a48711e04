"""Turn time-stamped admission histories into token sentences.

An admission becomes a phrase of (truncated) diagnosis and procedure codes.
Admissions close enough in time are linked into one episode and separated
by ``TRANSFER``; consecutive episodes are separated by a coded time-gap word.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .vocab import GAP_TOKENS, TRANSFER, Vocabulary

DAYS_PER_MONTH = 30.4375

_DX_CODE = re.compile(r"^[A-Za-z][0-9A-Za-z]{2,}(\.[0-9A-Za-z]*)?$")
_PX_CODE = re.compile(r"^[0-9]+(-[0-9]+)?$")


@dataclass(frozen=True)
class Admission:
    admit_time: datetime
    discharge_time: datetime
    diagnoses: tuple[str, ...] = ()
    procedures: tuple[str, ...] = ()
    transfer_flag: bool = False

    def __post_init__(self):
        object.__setattr__(self, "diagnoses", tuple(self.diagnoses))
        object.__setattr__(self, "procedures", tuple(self.procedures))
        if self.discharge_time < self.admit_time:
            raise ValueError(f"discharge {self.discharge_time} precedes admission {self.admit_time}")
        if any(not c for c in self.diagnoses + self.procedures):
            raise ValueError("empty code string")


@dataclass(frozen=True)
class RawRecord:
    patient_id: str
    admissions: tuple[Admission, ...]
    label: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "admissions", tuple(self.admissions))
        for a, b in zip(self.admissions, self.admissions[1:]):
            if b.admit_time < a.admit_time:
                raise ValueError(f"admissions of {self.patient_id} not sorted by admit time")


@dataclass(frozen=True)
class Episode:
    """Linked admissions; a TRANSFER marker sits between each consecutive pair."""

    admissions: tuple[Admission, ...]

    @property
    def admit_time(self) -> datetime:
        return self.admissions[0].admit_time

    @property
    def discharge_time(self) -> datetime:
        return self.admissions[-1].discharge_time


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[int, ...]
    boundaries: tuple[tuple[int, int], ...]
    label: int | None = None
    patient_id: str = ""

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class SequencerConfig:
    gap_bins: tuple[tuple[float, str], ...] = (
        (1, "0-1m"),
        (3, "1-3m"),
        (6, "3-6m"),
        (12, "6-12m"),
        (math.inf, "12m+"),
    )
    episode_merge_hours: float = 12.0
    episode_merge_with_transfer_hours: float = 24.0
    code_truncation_level: int = 3
    randomize_within_phrase: bool = False
    rng_seed: int = 0
    max_sentence_tokens: int = 100

    def __post_init__(self):
        bins = tuple((float(u), str(t)) for u, t in self.gap_bins)
        object.__setattr__(self, "gap_bins", bins)
        bounds = [u for u, _ in bins]
        if not bounds or any(b >= c for b, c in zip(bounds, bounds[1:])):
            raise ValueError("gap bin upper bounds must be strictly increasing")
        if not math.isinf(bounds[-1]):
            raise ValueError("last gap bin must be unbounded")
        if not 0 < self.episode_merge_hours <= self.episode_merge_with_transfer_hours:
            raise ValueError("need 0 < episode_merge_hours <= episode_merge_with_transfer_hours")
        if self.max_sentence_tokens < 1:
            raise ValueError("max_sentence_tokens must be positive")

    @property
    def gap_tokens(self) -> tuple[str, ...]:
        return tuple(t for _, t in self.gap_bins)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SequencerConfig":
        d = dict(d)
        if "gap_bins" in d:
            d["gap_bins"] = tuple(
                (math.inf if u is None or u == "inf" else float(u), t) for u, t in d["gap_bins"]
            )
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gap_bins"] = [["inf" if math.isinf(u) else u, t] for u, t in self.gap_bins]
        return d


def truncate_code(
    raw: str,
    level: int = 3,
    blocks: Mapping[str, str] | None = None,
    diagnostics: Counter | None = None,
) -> str:
    """Reduce a diagnosis code to its category, or a procedure code to its block.

    Letter-prefixed codes keep the first ``level`` characters of the part before
    the dot ("F20.0" -> "F20"). Numeric procedure codes are looked up in
    ``blocks`` (full code first, then the part before a dash) and pass through
    unchanged when no table is given. Anything else is returned verbatim and
    tallied under ``"malformed_code"``.
    """
    code = raw.strip()
    if _DX_CODE.match(code):
        return code.split(".", 1)[0][:level]
    if _PX_CODE.match(code):
        if blocks:
            if code in blocks:
                return blocks[code]
            stem = code.split("-", 1)[0]
            if stem in blocks:
                return blocks[stem]
        return code
    if diagnostics is not None:
        diagnostics["malformed_code"] += 1
    return raw


def link_episodes(
    record: RawRecord,
    cfg: SequencerConfig = SequencerConfig(),
    diagnostics: Counter | None = None,
) -> list[Episode]:
    merge = timedelta(hours=cfg.episode_merge_hours)
    merge_transfer = timedelta(hours=cfg.episode_merge_with_transfer_hours)
    episodes: list[list[Admission]] = []
    for adm in record.admissions:
        if episodes:
            prev = episodes[-1][-1]
            gap = adm.admit_time - prev.discharge_time
            if gap < timedelta(0):
                if diagnostics is not None:
                    diagnostics["overlapping_admissions"] += 1
                gap = timedelta(0)
            if gap < merge or (gap < merge_transfer and adm.transfer_flag):
                episodes[-1].append(adm)
                continue
        episodes.append([adm])
    return [Episode(tuple(e)) for e in episodes]


def gap_token(gap: timedelta | float, cfg: SequencerConfig = SequencerConfig()) -> str:
    """Map a gap (timedelta, or days as a number) to its right-closed month bin."""
    days = gap.total_seconds() / 86400.0 if isinstance(gap, timedelta) else float(gap)
    if days < 0 or math.isnan(days):
        raise ValueError(f"gap must be non-negative, got {days} days")
    months = days / DAYS_PER_MONTH
    for upper, token in cfg.gap_bins:
        if months <= upper:
            return token
    raise AssertionError("unreachable: last bin is unbounded")


def _patient_rng(seed: int, patient_id: str) -> np.random.Generator:
    digest = hashlib.sha256(patient_id.encode("utf-8")).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "little")])


def sequence_tokens(
    record: RawRecord,
    cfg: SequencerConfig = SequencerConfig(),
    blocks: Mapping[str, str] | None = None,
    diagnostics: Counter | None = None,
) -> tuple[list[str], list[tuple[int, int]]]:
    """Untrimmed string sentence and its phrase spans (half-open)."""
    if not record.admissions:
        raise ValueError("empty record")
    rng = _patient_rng(cfg.rng_seed, record.patient_id) if cfg.randomize_within_phrase else None
    tokens: list[str] = []
    boundaries: list[tuple[int, int]] = []
    episodes = link_episodes(record, cfg, diagnostics)
    for e, episode in enumerate(episodes):
        if e > 0:
            tokens.append(gap_token(episode.admit_time - episodes[e - 1].discharge_time, cfg))
        for a, adm in enumerate(episode.admissions):
            if a > 0:
                tokens.append(TRANSFER)
            phrase = [
                truncate_code(c, cfg.code_truncation_level, blocks, diagnostics)
                for c in adm.diagnoses + adm.procedures
            ]
            if rng is not None:
                phrase = [phrase[i] for i in rng.permutation(len(phrase))]
            if phrase:
                boundaries.append((len(tokens), len(tokens) + len(phrase)))
                tokens.extend(phrase)
    return tokens, boundaries


def trim_suffix(
    tokens: Sequence, boundaries: Sequence[tuple[int, int]], max_tokens: int
) -> tuple[list, list[tuple[int, int]]]:
    offset = max(0, len(tokens) - max_tokens)
    kept = [(max(s - offset, 0), e - offset) for s, e in boundaries if e - offset > 0]
    return list(tokens[offset:]), kept


def sequence_record(
    record: RawRecord,
    vocab: Vocabulary,
    cfg: SequencerConfig = SequencerConfig(),
    blocks: Mapping[str, str] | None = None,
    diagnostics: Counter | None = None,
) -> Sentence:
    tokens, boundaries = sequence_tokens(record, cfg, blocks, diagnostics)
    ids, boundaries = trim_suffix(vocab.encode(tokens), boundaries, cfg.max_sentence_tokens)
    return Sentence(
        tokens=tuple(ids),
        boundaries=tuple(boundaries),
        label=record.label,
        patient_id=record.patient_id,
    )


# ---------------------------------------------------------------------------
# line-delimited JSON I/O


def _parse_time(s: str) -> datetime:
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    return datetime.fromisoformat(s)


def record_from_json(obj: Mapping) -> RawRecord:
    admissions = sorted(
        (
            Admission(
                admit_time=_parse_time(a["admit"]),
                discharge_time=_parse_time(a["discharge"]),
                diagnoses=tuple(a.get("dx", ())),
                procedures=tuple(a.get("px", ())),
                transfer_flag=bool(a.get("transfer", False)),
            )
            for a in obj["admissions"]
        ),
        key=lambda a: a.admit_time,
    )
    label = obj.get("label")
    return RawRecord(
        patient_id=str(obj["patient_id"]),
        admissions=tuple(admissions),
        label=None if label is None else int(label),
    )


def record_to_json(record: RawRecord) -> dict:
    return {
        "patient_id": record.patient_id,
        "admissions": [
            {
                "admit": a.admit_time.isoformat(),
                "discharge": a.discharge_time.isoformat(),
                "dx": list(a.diagnoses),
                "px": list(a.procedures),
                "transfer": a.transfer_flag,
            }
            for a in record.admissions
        ],
        "label": record.label,
    }


def read_records(path: str | Path) -> Iterator[RawRecord]:
    with open(path) as f:
        for line in f:
            if line.strip():
                yield record_from_json(json.loads(line))


def write_records(path: str | Path, records: Iterable[RawRecord]) -> None:
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(record_to_json(r), separators=(",", ":")) + "\n")


def sentence_to_json(sentence: Sentence, vocab: Vocabulary) -> dict:
    return {
        "patient_id": sentence.patient_id,
        "tokens": vocab.decode(sentence.tokens),
        "label": sentence.label,
        "boundaries": [list(b) for b in sentence.boundaries],
        "vocab_hash": vocab.hash,
    }


def sentence_from_json(obj: Mapping, vocab: Vocabulary) -> Sentence:
    h = obj.get("vocab_hash")
    if h is not None and h != vocab.hash:
        raise ValueError(
            f"sentence {obj.get('patient_id')!r} was encoded with vocabulary {h}, not {vocab.hash}"
        )
    label = obj.get("label")
    return Sentence(
        tokens=tuple(vocab.encode(obj["tokens"])),
        boundaries=tuple(tuple(b) for b in obj.get("boundaries", ())),
        label=None if label is None else int(label),
        patient_id=str(obj["patient_id"]),
    )


def read_sentences(path: str | Path, vocab: Vocabulary) -> list[Sentence]:
    with open(path) as f:
        return [sentence_from_json(json.loads(line), vocab) for line in f if line.strip()]


def write_sentences(path: str | Path, sentences: Iterable[Sentence], vocab: Vocabulary) -> None:
    with open(path, "w") as f:
        for s in sentences:
            f.write(json.dumps(sentence_to_json(s, vocab), separators=(",", ":")) + "\n")

