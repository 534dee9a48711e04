"""Synthetic cohorts with planted, order-sensitive risk motifs.

Patients are generated in twin pairs that share one background record (same
admissions, timestamps and codes). The twin carrying a motif's label effect
gets the motif as a contiguous run inside one admission; the other twin gets
the same tokens scattered so that no two are adjacent. Both twins therefore
have identical token multisets, and label noise is applied by swapping the
labels of a whole pair, so class-conditional bag-of-words statistics match
exactly while contiguous motifs still carry the signal.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import chi2_contingency

from .sequencer import DAYS_PER_MONTH, Admission, RawRecord, truncate_code

# (low, high] inter-episode gap ranges in days, one per default gap bin;
# the first bin starts above the 24 h transfer-linking horizon.
_GAP_DAY_RANGES = (
    (1.5, DAYS_PER_MONTH),
    (DAYS_PER_MONTH, 3 * DAYS_PER_MONTH),
    (3 * DAYS_PER_MONTH, 6 * DAYS_PER_MONTH),
    (6 * DAYS_PER_MONTH, 12 * DAYS_PER_MONTH),
    (12 * DAYS_PER_MONTH, 24 * DAYS_PER_MONTH),
)


@dataclass(frozen=True)
class PlantedMotif:
    tokens: tuple[str, ...]
    label_effect: str = "positive"
    injection_probability: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.label_effect not in ("positive", "negative"):
            raise ValueError(f"label_effect must be 'positive' or 'negative', got {self.label_effect!r}")
        if not 0.0 <= self.injection_probability <= 1.0:
            raise ValueError("injection_probability must lie in [0, 1]")
        if len(self.tokens) < 2:
            raise ValueError("a motif needs at least two tokens")


@dataclass(frozen=True)
class CohortSpec:
    n_patients: int = 5000
    vocab_size: int = 120
    mean_admissions: float = 4.0
    codes_per_admission: tuple[int, int] = (2, 6)
    planted_motifs: tuple[PlantedMotif, ...] = (PlantedMotif(("C34", "I50", "N18")),)
    gap_probabilities: tuple[float, ...] = (0.2, 0.2, 0.2, 0.2, 0.2)
    label_noise: float = 0.05
    transfer_probability: float = 0.15
    subcode_probability: float = 0.5
    procedure_fraction: float = 0.25
    seed: int = 0
    start: str = "2011-07-01T00:00:00"

    def __post_init__(self):
        object.__setattr__(
            self,
            "planted_motifs",
            tuple(m if isinstance(m, PlantedMotif) else PlantedMotif(**m) for m in self.planted_motifs),
        )
        object.__setattr__(self, "codes_per_admission", tuple(self.codes_per_admission))
        object.__setattr__(self, "gap_probabilities", tuple(self.gap_probabilities))
        if self.n_patients < 2:
            raise ValueError("need at least two patients")
        if not 0.0 <= self.label_noise < 0.5:
            raise ValueError("label_noise must lie in [0, 0.5)")
        if self.mean_admissions < 1:
            raise ValueError("mean_admissions must be >= 1")
        if not 0.0 <= self.procedure_fraction < 1.0:
            raise ValueError("procedure_fraction must lie in [0, 1)")
        lo, hi = self.codes_per_admission
        if not 1 <= lo <= hi:
            raise ValueError("codes_per_admission must satisfy 1 <= low <= high")
        if len(self.gap_probabilities) != len(_GAP_DAY_RANGES) or not math.isclose(
            sum(self.gap_probabilities), 1.0
        ):
            raise ValueError("gap_probabilities must have five entries summing to 1")
        planted = [t for m in self.planted_motifs for t in m.tokens]
        if len(planted) != len(set(planted)):
            raise ValueError("planted motifs must use disjoint tokens")
        for t in planted:
            if truncate_code(t) != t:
                raise ValueError(f"planted token {t!r} is not a level-3 code")
        _background_pools(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "CohortSpec":
        d = dict(d)
        if "planted_motifs" in d:
            d["planted_motifs"] = tuple(PlantedMotif(**m) for m in d["planted_motifs"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["planted_motifs"] = [asdict(m) for m in self.planted_motifs]
        return d


def _pool_sizes(spec: CohortSpec) -> tuple[int, int]:
    n_px = int(round(spec.vocab_size * spec.procedure_fraction))
    return spec.vocab_size - n_px, n_px


def _background_pools(spec: CohortSpec) -> tuple[list[str], list[str]]:
    planted = {t for m in spec.planted_motifs for t in m.tokens}
    n_dx, n_px = _pool_sizes(spec)
    if n_dx < 1:
        raise ValueError(f"vocab_size {spec.vocab_size} leaves no background diagnosis codes")
    letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    dx_all = [f"{letters[i // 100 % 26]}{i % 100:02d}" for i in range(2600)]
    dx = [c for c in dx_all[::7] if c not in planted]
    if n_dx > len(dx):
        raise ValueError(f"vocab_size {spec.vocab_size} exceeds the available code space")
    px = [str(1000 + 37 * i) for i in range(n_px)]
    return dx[:n_dx], px


@dataclass
class _Skeleton:
    """Background admissions as mutable code lists plus timing."""

    times: list[tuple[datetime, datetime, bool]]
    dx: list[list[str]]
    px: list[list[str]]

    def copy(self) -> "_Skeleton":
        return _Skeleton(list(self.times), [list(d) for d in self.dx], [list(p) for p in self.px])

    def to_admissions(self) -> tuple[Admission, ...]:
        return tuple(
            Admission(a, d, tuple(dx), tuple(px), flag)
            for (a, d, flag), dx, px in zip(self.times, self.dx, self.px)
        )


def _draw_skeleton(rng: np.random.Generator, spec: CohortSpec, dx_pool, px_pool) -> _Skeleton:
    start = datetime.fromisoformat(spec.start) + timedelta(hours=int(rng.integers(0, 24 * 365)))
    n_episodes = int(rng.geometric(1.0 / spec.mean_admissions))
    lo, hi = spec.codes_per_admission
    times, dx, px = [], [], []
    t = start
    for e in range(n_episodes):
        if e > 0:
            bin_ = rng.choice(len(_GAP_DAY_RANGES), p=spec.gap_probabilities)
            a, b = _GAP_DAY_RANGES[bin_]
            # whole hours, kept one hour clear of either bin edge
            hours = int(rng.integers(math.ceil(a * 24) + 1, math.floor(b * 24)))
            t = t + timedelta(hours=hours)
        flag = False
        while True:
            stay = timedelta(hours=int(rng.integers(4, 24 * 10)))
            times.append((t, t + stay, flag))
            n = int(rng.integers(lo, hi + 1))
            n_px = int(rng.binomial(n - 1, spec.procedure_fraction)) if px_pool else 0
            dx.append([_with_subcode(rng, spec, c) for c in rng.choice(dx_pool, size=n - n_px)])
            px.append([str(c) for c in rng.choice(px_pool, size=n_px)] if n_px else [])
            t = t + stay
            if rng.random() >= spec.transfer_probability:
                break
            # linked admission: under 12 h apart, or 12-24 h with a documented transfer
            if rng.random() < 0.5:
                t = t + timedelta(hours=int(rng.integers(1, 12)))
                flag = bool(rng.random() < 0.5)
            else:
                t = t + timedelta(hours=int(rng.integers(13, 24)))
                flag = True
    return _Skeleton(times, dx, px)


def _with_subcode(rng: np.random.Generator, spec: CohortSpec, code: str) -> str:
    if rng.random() < spec.subcode_probability:
        return f"{code}.{int(rng.integers(0, 10))}"
    return str(code)


def _plant_contiguous(rng: np.random.Generator, sk: _Skeleton, tokens: Sequence[str]) -> None:
    a = int(rng.integers(len(sk.dx)))
    pos = int(rng.integers(len(sk.dx[a]) + 1))
    sk.dx[a][pos:pos] = list(tokens)


def _plant_scattered(rng: np.random.Generator, sk: _Skeleton, tokens: Sequence[str]) -> None:
    """Insert tokens at distinct diagnosis slots so that no two end up adjacent.

    Slot s of an admission means "before its s-th diagnosis"; two tokens in
    distinct slots of one admission are separated by at least one background
    code, and tokens in different admissions by a separator word.
    """
    slots = [(a, s) for a in range(len(sk.dx)) for s in range(len(sk.dx[a]) + 1)]
    chosen = rng.choice(len(slots), size=len(tokens), replace=False)
    order = rng.permutation(len(tokens))
    placed: dict[int, dict[int, str]] = {}
    for c, o in zip(chosen, order):
        a, s = slots[c]
        placed.setdefault(a, {})[s] = tokens[o]
    for a, by_slot in placed.items():
        old = sk.dx[a]
        new = []
        for s in range(len(old) + 1):
            if s in by_slot:
                new.append(by_slot[s])
            if s < len(old):
                new.append(old[s])
        sk.dx[a] = new


def _ensure_slots(rng: np.random.Generator, sk: _Skeleton, need: int, dx_pool, spec) -> None:
    while sum(len(d) + 1 for d in sk.dx) < need:
        sk.dx[0].append(_with_subcode(rng, spec, rng.choice(dx_pool)))


def generate_cohort(spec: CohortSpec = CohortSpec()) -> tuple[list[RawRecord], dict]:
    """Records (labels attached) and a manifest describing what was planted."""
    dx_pool, px_pool = _background_pools(spec)
    n_pairs = spec.n_patients // 2
    seeds = np.random.SeedSequence(spec.seed).spawn(n_pairs)
    need = max(len(m.tokens) for m in spec.planted_motifs) if spec.planted_motifs else 0
    records: list[RawRecord] = []
    injected = Counter()
    for i, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        sk = _draw_skeleton(rng, spec, dx_pool, px_pool)
        _ensure_slots(rng, sk, need, dx_pool, spec)
        twins = {1: sk.copy(), 0: sk.copy()}
        for k, motif in enumerate(spec.planted_motifs):
            if rng.random() < motif.injection_probability:
                carrier = 1 if motif.label_effect == "positive" else 0
                _plant_contiguous(rng, twins[carrier], motif.tokens)
                _plant_scattered(rng, twins[1 - carrier], motif.tokens)
                injected[k] += 1
        swap = bool(rng.random() < spec.label_noise)
        for true_label in (1, 0):
            label = 1 - true_label if swap else true_label
            records.append(
                RawRecord(
                    patient_id=f"p{2 * i + (1 - true_label):06d}",
                    admissions=twins[true_label].to_admissions(),
                    label=label,
                )
            )
    manifest = {
        "spec": spec.to_dict(),
        "n_records": len(records),
        "planted_motifs": [
            {**asdict(m), "tokens": list(m.tokens), "n_pairs_injected": injected[k]}
            for k, m in enumerate(spec.planted_motifs)
        ],
        **bow_signal_report(records),
    }
    return records, manifest


def class_token_counts(records: Sequence[RawRecord]) -> dict[int, Counter]:
    counts = {0: Counter(), 1: Counter()}
    for r in records:
        for a in r.admissions:
            counts[r.label].update(truncate_code(c) for c in a.diagnoses + a.procedures)
    return counts


def bow_signal_report(records: Sequence[RawRecord]) -> dict:
    """Chi-squared independence test and total-variation distance of token counts vs label."""
    counts = class_token_counts(records)
    vocab = sorted(set(counts[0]) | set(counts[1]))
    table = np.array([[counts[y][t] for t in vocab] for y in (0, 1)], dtype=np.float64)
    if table.sum(axis=1).min() == 0:
        return {"chi2_p_value": None, "tv_distance": None}
    if np.array_equal(table[0], table[1]):
        p_value = 1.0
    else:
        p_value = float(chi2_contingency(table, correction=False)[1])
    dist = table / table.sum(axis=1, keepdims=True)
    return {
        "chi2_p_value": p_value,
        "tv_distance": float(0.5 * np.abs(dist[0] - dist[1]).sum()),
    }


def motif_presence(records: Sequence[RawRecord], motif: Sequence[str], label: int = 1) -> float:
    """Fraction of records with ``label`` holding ``motif`` contiguously inside one admission."""
    motif = list(motif)
    k = len(motif)
    hits = total = 0
    for r in records:
        if r.label != label:
            continue
        total += 1
        for a in r.admissions:
            codes = [truncate_code(c) for c in a.diagnoses + a.procedures]
            if any(codes[j : j + k] == motif for j in range(len(codes) - k + 1)):
                hits += 1
                break
    return hits / total if total else float("nan")


def split_cohort(records: Sequence, sizes: Sequence[int], seed: int = 0) -> list[list]:
    """Shuffle and cut into consecutive parts of the given sizes."""
    if sum(sizes) > len(records):
        raise ValueError(f"requested {sum(sizes)} records but only {len(records)} available")
    order = np.random.default_rng(seed).permutation(len(records))
    parts, start = [], 0
    for n in sizes:
        parts.append([records[i] for i in order[start : start + n]])
        start += n
    return parts


def write_manifest(path: str | Path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if o == math.inf:
        return "inf"
    raise TypeError(f"not serializable: {o!r}")
