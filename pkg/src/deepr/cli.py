"""Command-line entry point: ``deepr <command> ...``.

Every command writes line-delimited JSON unless noted. Exit codes: 0 on
success, 2 on a usage error, 3 on bad input data or a format mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .baseline import bow_matrix, lr_fit
from .checkpoint import load_checkpoint, save_checkpoint
from .inspection import mine_motifs, nearest_patients, patient_vector, project_2d
from .metrics import evaluate
from .model import ModelConfig, forward
from .sequencer import (
    SequencerConfig,
    read_records,
    read_sentences,
    sequence_record,
    sequence_tokens,
    write_records,
    write_sentences,
)
from .skipgram import PretrainConfig, pretrain_embeddings
from .synth import CohortSpec, generate_cohort, write_manifest
from .train import TrainConfig, init_params, sgd_fit
from .vocab import Vocabulary, build_vocab

log = logging.getLogger("deepr")

CONFIG_VERSION = 1


class DataError(Exception):
    """Input that parses as arguments but is unusable: exit code 3."""


@dataclass(frozen=True)
class RunConfig:
    sequencer: SequencerConfig = field(default_factory=SequencerConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    rare_threshold: int = 100
    version: int = CONFIG_VERSION

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {"sequencer", "model", "train", "pretrain", "rare_threshold", "version"}
        extra = set(d) - known
        if extra:
            raise DataError(f"unknown config sections: {sorted(extra)}")
        version = d.get("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise DataError(f"unsupported config version {version}")
        try:
            model = dict(d.get("model", {}))
            if "widths" in model:
                model["widths"] = tuple(model["widths"])
            return cls(
                sequencer=SequencerConfig.from_dict(d.get("sequencer", {})),
                model=ModelConfig(**model),
                train=TrainConfig(**d.get("train", {})),
                pretrain=PretrainConfig(**d.get("pretrain", {})),
                rare_threshold=int(d.get("rare_threshold", 100)),
            )
        except (TypeError, ValueError) as e:
            raise DataError(f"bad config: {e}") from e

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        if path is None:
            return cls()
        return cls.from_dict(_read_json(path))

    def with_seed(self, seed: int | None) -> "RunConfig":
        """Flags win over the file: ``--seed`` reseeds every stochastic stage."""
        if seed is None:
            return self
        return replace(
            self,
            sequencer=replace(self.sequencer, rng_seed=seed),
            train=replace(self.train, seed=seed),
            pretrain=replace(self.pretrain, seed=seed),
        )


def _read_json(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"no such file: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: {e}") from e


def _require(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"no such file: {path}")
    return p


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def _write_lines(out, rows: Iterable[dict]) -> None:
    for row in rows:
        out.write(_dump(row) + "\n")


def _default_vocab_path(sentences: str) -> Path:
    return Path(str(sentences) + ".vocab.json")


def _load_vocab(path: str | None, sentences: str) -> Vocabulary:
    p = Path(path) if path else _default_vocab_path(sentences)
    if not p.is_file():
        raise DataError(f"vocabulary file not found: {p}")
    return Vocabulary.load(p)


def _sentences(path: str, vocab: Vocabulary):
    return read_sentences(_require(path), vocab)


def _labelled(sentences, what: str):
    if any(s.label is None for s in sentences):
        raise DataError(f"{what} contains unlabelled sentences")
    return sentences


# commands


def cmd_synth(args) -> int:
    spec = CohortSpec.from_dict(_read_json(args.spec)) if args.spec else CohortSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    records, manifest = generate_cohort(spec)
    write_records(args.out_records, records)
    write_manifest(args.out_manifest, manifest)
    log.info("wrote %d records (chi2 p=%.3g, tv=%.3g)", len(records), manifest["chi2_p_value"], manifest["tv_distance"])
    return 0


def cmd_sequence(args) -> int:
    cfg = RunConfig.load(args.config).with_seed(args.seed)
    records = list(read_records(_require(args.input)))
    diagnostics: dict = {}
    vocab_path = Path(args.vocab) if args.vocab else _default_vocab_path(args.output)
    if vocab_path.is_file():
        vocab = Vocabulary.load(vocab_path)
        log.info("using vocabulary %s (%d tokens)", vocab_path, len(vocab))
    else:
        vocab = build_vocab((sequence_tokens(r, cfg.sequencer)[0] for r in records), cfg.rare_threshold)
        vocab.save(vocab_path)
        log.info("built vocabulary %s (%d tokens)", vocab_path, len(vocab))
    sentences = [sequence_record(r, vocab, cfg.sequencer, diagnostics=diagnostics) for r in records]
    write_sentences(args.output, sentences, vocab)
    log.info("sequenced %d records; diagnostics %s", len(sentences), _dump(diagnostics))
    return 0


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config).with_seed(args.seed)
    vocab = _load_vocab(args.vocab, args.sentences)
    train = _labelled(_sentences(args.sentences, vocab), "training set")
    dev = _labelled(_sentences(args.dev, vocab), "dev set")
    if not train or not dev:
        raise DataError("training and dev sets must be non-empty")
    warm = None
    if args.pretrain_embeddings:
        corpus = _sentences(args.pretrain_embeddings, vocab)
        warm = pretrain_embeddings(corpus, len(vocab), replace(cfg.pretrain, dims=cfg.model.m))
    params = init_params(cfg.model, vocab, seed=cfg.train.seed, warm_start_E=warm)

    def on_epoch(rec):
        sys.stdout.write(_dump(rec) + "\n")
        sys.stdout.flush()

    best, history = sgd_fit(train, dev, params, cfg.train, on_epoch=on_epoch)
    meta = {
        "config": {
            "sequencer": cfg.sequencer.to_dict(),
            "model": asdict(cfg.model),
            "train": cfg.train.to_dict(),
            "pretrain": cfg.pretrain.to_dict() if args.pretrain_embeddings else None,
        },
        "history": history,
    }
    save_checkpoint(args.out, best, vocab, meta)
    return 0


def _check_hash(sentences_path: str, vocab: Vocabulary) -> None:
    with open(_require(sentences_path)) as f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            h = json.loads(line).get("vocab_hash")
            if h != vocab.hash:
                raise DataError(
                    f"{sentences_path}:{n}: sentence vocabulary hash {h} does not match checkpoint {vocab.hash}"
                )


def cmd_predict(args) -> int:
    params, vocab, _ = load_checkpoint(_require(args.ckpt))
    _check_hash(args.sentences, vocab)
    sentences = _sentences(args.sentences, vocab)
    rows = []
    for s in sentences:
        prob = forward(s, params).probability
        rows.append({"patient_id": s.patient_id, "probability": prob, "label": int(prob >= 0.5), "true_label": s.label})
    with _open_out(args.out) as out:
        _write_lines(out, rows)
    return 0


class _open_out:
    def __init__(self, path: str | None):
        self.path = path

    def __enter__(self):
        self.f = open(self.path, "w") if self.path and self.path != "-" else None
        return self.f or sys.stdout

    def __exit__(self, *exc):
        if self.f:
            self.f.close()


def _read_jsonl(path: str) -> list[dict]:
    rows = []
    with open(_require(path)) as f:
        for n, line in enumerate(f, 1):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise DataError(f"{path}:{n}: {e}") from e
    return rows


def cmd_evaluate(args) -> int:
    preds = _read_jsonl(args.predictions)
    if args.labels:
        truth = {r["patient_id"]: r.get("label") for r in _read_jsonl(args.labels)}
        missing = [p["patient_id"] for p in preds if p["patient_id"] not in truth]
        if missing:
            raise DataError(f"{len(missing)} predictions have no label, e.g. {missing[0]}")
        labels = [truth[p["patient_id"]] for p in preds]
    else:
        labels = [p.get("true_label") for p in preds]
    if any(v is None for v in labels):
        raise DataError("some predictions have no true label")
    probs = [p["probability"] for p in preds]
    if not probs:
        raise DataError("no predictions to evaluate")
    sys.stdout.write(_dump(evaluate(probs, labels)) + "\n")
    return 0


def cmd_baseline(args) -> int:
    vocab = _load_vocab(args.vocab, args.sentences)
    include = not args.no_time_tokens
    sets = {}
    for name, path in (("train", args.sentences), ("dev", args.dev), ("test", args.test)):
        sents = _labelled(_sentences(path, vocab), f"{name} set")
        sets[name] = (bow_matrix(sents, len(vocab), vocab, include), np.array([s.label for s in sents]))
    X, y = sets["train"]
    if len(y) == 0:
        raise DataError("empty training set")
    model = lr_fit(X, y, C=args.C)
    out = {"C": args.C, "include_time_tokens": include, "n_iter": model.n_iter, "grad_norm": model.grad_norm,
           "converged": model.converged}
    for name in ("dev", "test"):
        Xs, ys = sets[name]
        if len(ys):
            out[name] = evaluate(model.predict_proba(Xs), ys)
    sys.stdout.write(_dump(out) + "\n")
    return 0


def _summary_row(m, vocab: Vocabulary) -> dict:
    row = asdict(m)
    row["token_window"] = list(m.token_window)
    row["tokens"] = [vocab.id_to_token[t] if t >= 0 else "PAD" for t in m.token_window]
    return row


def cmd_motifs(args) -> int:
    params, vocab, _ = load_checkpoint(_require(args.ckpt))
    _check_hash(args.sentences, vocab)
    sentences = _labelled(_sentences(args.sentences, vocab), "motif dataset")
    summaries = mine_motifs(sentences, params, args.top, args.min_count)
    with _open_out(args.out) as out:
        _write_lines(out, (_summary_row(m, vocab) for m in summaries))
    return 0


def cmd_similar(args) -> int:
    params, vocab, _ = load_checkpoint(_require(args.ckpt))
    _check_hash(args.sentences, vocab)
    sentences = _sentences(args.sentences, vocab)
    ids = [s.patient_id for s in sentences]
    if args.query not in ids:
        raise DataError(f"patient {args.query} not in {args.sentences}")
    q = ids.index(args.query)
    vectors = np.array([patient_vector(s, params) for s in sentences])
    order = nearest_patients(vectors[q], vectors, args.k, exclude=q)
    rows = [
        {"patient_id": ids[i], "distance": float(np.linalg.norm(vectors[i] - vectors[q])), "label": sentences[i].label}
        for i in order
    ]
    _write_lines(sys.stdout, rows)
    return 0


def cmd_export_embeddings(args) -> int:
    """TSV (not JSON): token, x, y, then the full embedding row."""
    params, vocab, _ = load_checkpoint(_require(args.ckpt))
    points, _ = project_2d(params.E)
    with _open_out(args.out) as out:
        for tok, (x, y), row in zip(vocab.id_to_token, points, params.E):
            out.write("\t".join([tok, repr(float(x)), repr(float(y))] + [repr(float(v)) for v in row]) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deepr", description=__doc__.splitlines()[0])
    ap.add_argument("--log-level", default="INFO")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--spec")
    p.add_argument("--out-records", required=True)
    p.add_argument("--out-manifest", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sequence", help="turn records into encoded sentences")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--config")
    p.add_argument("--vocab", help="vocabulary to use; built from the input and written here if missing")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sequence)

    p = sub.add_parser("train", help="train the convolutional model")
    p.add_argument("--sentences", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--vocab")
    p.add_argument("--pretrain-embeddings", metavar="CORPUS")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score sentences with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--sentences", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="accuracy and AUC of predictions")
    p.add_argument("--predictions", required=True)
    p.add_argument("--labels", help="JSONL with patient_id and label; defaults to true_label in the predictions")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", help="bag-of-words logistic regression")
    p.add_argument("--sentences", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--C", type=float, default=0.1)
    p.add_argument("--no-time-tokens", action="store_true")
    p.add_argument("--vocab")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("motifs", help="mine frequent strong motifs")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--sentences", required=True)
    p.add_argument("--top", type=int, default=3)
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_motifs)

    p = sub.add_parser("similar", help="nearest patients by pooled vector")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--sentences", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_similar)

    p = sub.add_parser("export-embeddings", help="embedding rows with a 2-D projection, as TSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_embeddings)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (DataError, ValueError, KeyError, IndexError, TypeError, json.JSONDecodeError, OSError) as e:
        log.error("%s", e)
        return 3


if __name__ == "__main__":
    sys.exit(main())
