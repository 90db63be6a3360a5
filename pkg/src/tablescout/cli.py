"""Pipeline driver: prep -> mine -> train -> encode-tables -> eval/search,
plus the bm25-eval baseline, the gradcheck audit, and the synth generator.

Every artifact-producing command writes a `<artifact>.manifest.json` next
to each artifact recording the command, resolved config, input digests,
seed, tool version, and wall time. Outputs are byte-identical across reruns
with the same inputs and seed; only the manifest wall time varies.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import metrics as metrics_mod
from . import trainer as trainer_mod
from .bm25 import bm25_rank, build_bm25, table_document
from .corpus import (
    Corpus,
    Question,
    Split,
    load_questions,
    load_tables,
    save_questions,
    save_tables,
    tokenize,
)
from .embeddings import load_embeddings, signature_matrix
from .errors import TableScoutError
from .index import build_index, knn
from .model import ModelConfig, QuestionEncoderKind
from .sampler import Strategy, build_training_set, load_tuples, save_tuples
from .serialization import (
    Checkpoint,
    canonical_json_bytes,
    file_sha256,
    load_checkpoint,
    load_table_vectors,
    save_table_vectors,
    sha256_hex,
)
from .synth import generate as synth_generate
from .synth import write as synth_write

log = logging.getLogger(__name__)

_MODEL_KEYS = {
    "word_dim",
    "char_dim",
    "use_char",
    "question_encoder",
    "column_intermediate_dim",
    "mlp_hidden_dims",
    "out_dim",
    "question_mlp_dims",
    "word_lstm_dim",
    "margin",
}
_HYPER_KEYS = {
    "learning_rate",
    "batch_size",
    "max_epochs",
    "beta1",
    "beta2",
    "eps",
    "seed",
    "eval_every",
}


def parse_train_config(obj: dict) -> tuple[ModelConfig, trainer_mod.TrainHyper]:
    unknown = set(obj) - _MODEL_KEYS - _HYPER_KEYS
    if unknown:
        raise TableScoutError(f"unknown config keys: {sorted(unknown)}")
    config = ModelConfig.from_dict({k: v for k, v in obj.items() if k in _MODEL_KEYS})
    hyper = trainer_mod.TrainHyper(**{k: v for k, v in obj.items() if k in _HYPER_KEYS})
    hyper.validate()
    return config, hyper


def write_manifest(
    artifact: Path,
    command: str,
    config: dict,
    inputs: dict[str, str | Path],
    seed: int | None,
    wall_time_s: float,
) -> Path:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(p): file_sha256(p) for p in sorted(str(x) for x in inputs.values())},
        "artifact": {"path": str(artifact), "sha256": file_sha256(artifact)},
        "seed": seed,
        "tool_version": __version__,
        "wall_time_s": round(wall_time_s, 3),
    }
    path = Path(str(artifact) + ".manifest.json")
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def _load_corpus(tables_path, questions_path, split: Split) -> Corpus:
    tables = load_tables(tables_path)
    questions = load_questions(questions_path, split, {t.id for t in tables})
    return Corpus(tables={split: tables}, questions={split: questions})


def _corpus_fingerprint(*paths) -> str:
    return sha256_hex(b"".join(file_sha256(p).encode() for p in paths))


def _parse_ks(text: str) -> list[int]:
    try:
        ks = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise TableScoutError(f"bad --ks value {text!r}") from exc
    if not ks or any(k < 1 for k in ks):
        raise TableScoutError("--ks must be positive integers")
    return ks


# --- subcommands -----------------------------------------------------------


def cmd_prep(args) -> int:
    start = time.monotonic()
    split = Split(args.split)
    tables = load_tables(args.tables)
    questions = load_questions(args.questions, split, {t.id for t in tables})
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables_out = out_dir / f"tables.{split.value}.jsonl"
    questions_out = out_dir / f"questions.{split.value}.jsonl"
    save_tables(tables, tables_out)
    save_questions(questions, questions_out)
    wall = time.monotonic() - start
    cfg = {"split": split.value, "n_tables": len(tables), "n_questions": len(questions)}
    inputs = {"tables": args.tables, "questions": args.questions}
    for artifact in (tables_out, questions_out):
        write_manifest(artifact, "prep", cfg, inputs, None, wall)
    print(f"prep: {len(tables)} tables, {len(questions)} questions -> {out_dir}")
    return 0


def cmd_synth(args) -> int:
    start = time.monotonic()
    corpus = synth_generate(
        seed=args.seed,
        n_tables=args.tables,
        n_train_tables=args.train_tables,
        questions_per_table=args.questions_per_table,
        word_dim=args.word_dim,
    )
    paths = synth_write(corpus, args.out_dir)
    wall = time.monotonic() - start
    cfg = {
        "n_tables": args.tables,
        "n_train_tables": args.train_tables,
        "questions_per_table": args.questions_per_table,
        "word_dim": args.word_dim,
    }
    for artifact in paths.values():
        write_manifest(artifact, "synth", cfg, {}, args.seed, wall)
    print(f"synth: wrote corpus for seed {args.seed} -> {args.out_dir}")
    return 0


def cmd_mine(args) -> int:
    start = time.monotonic()
    corpus = _load_corpus(args.tables, args.questions, Split.TRAIN)
    questions = corpus.questions[Split.TRAIN]
    strategy = Strategy(args.strategy)
    signatures = None
    inputs = {"tables": args.tables, "questions": args.questions}
    if strategy in (Strategy.HARD_ONLY, Strategy.BOTH):
        if not args.embeddings:
            raise TableScoutError(f"--embeddings is required for strategy {strategy.value!r}")
        store = load_embeddings(args.embeddings, args.dim)
        signatures = signature_matrix(store, questions)
        inputs["embeddings"] = args.embeddings
    tuples = build_training_set(questions, strategy, args.seed, signatures)
    save_tuples(tuples, args.out)
    wall = time.monotonic() - start
    cfg = {"strategy": strategy.value, "dim": args.dim, "n_tuples": len(tuples)}
    write_manifest(Path(args.out), "mine", cfg, inputs, args.seed, wall)
    print(f"mine: {len(tuples)} tuples ({strategy.value}) -> {args.out}")
    return 0


def cmd_train(args) -> int:
    start = time.monotonic()
    try:
        config_obj = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise TableScoutError(f"cannot read config {args.config}: {exc}") from exc
    config, hyper = parse_train_config(config_obj)
    train_corpus = _load_corpus(args.tables, args.questions, Split.TRAIN)
    dev_corpus = _load_corpus(args.dev_tables, args.dev_questions, Split.DEV)
    corpus = Corpus(
        tables={**train_corpus.tables, **dev_corpus.tables},
        questions={**train_corpus.questions, **dev_corpus.questions},
    )
    store = load_embeddings(args.embeddings, config.word_dim)
    tuples = load_tuples(args.tuples)
    fingerprint = _corpus_fingerprint(args.tables, args.questions, args.tuples)
    report = trainer_mod.train(
        corpus, tuples, store, config, hyper, args.checkpoint_out, fingerprint
    )
    report_path = Path(args.report_out)
    report_path.write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    wall = time.monotonic() - start
    inputs = {
        "tables": args.tables,
        "questions": args.questions,
        "dev_tables": args.dev_tables,
        "dev_questions": args.dev_questions,
        "embeddings": args.embeddings,
        "tuples": args.tuples,
        "config": args.config,
    }
    write_manifest(Path(args.checkpoint_out), "train", config_obj, inputs, hyper.seed, wall)
    write_manifest(report_path, "train", config_obj, inputs, hyper.seed, wall)
    print(
        f"train: best dev MRR {report.best_dev_mrr:.4f} at step {report.best_step} "
        f"-> {args.checkpoint_out}"
    )
    return 0


def cmd_encode_tables(args) -> int:
    start = time.monotonic()
    checkpoint = load_checkpoint(args.checkpoint)
    tables = load_tables(args.tables)
    store = load_embeddings(args.embeddings, checkpoint.params.config.word_dim)
    from .model import encode_table

    ids = [t.id for t in tables]
    matrix = np.stack([encode_table(t, checkpoint.params, store) for t in tables])
    save_table_vectors(args.out, ids, matrix)
    wall = time.monotonic() - start
    inputs = {"checkpoint": args.checkpoint, "tables": args.tables, "embeddings": args.embeddings}
    write_manifest(Path(args.out), "encode-tables", {"n_tables": len(ids)}, inputs, None, wall)
    print(f"encode-tables: {len(ids)} tables -> {args.out}")
    return 0


def cmd_search(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    store = load_embeddings(args.embeddings, checkpoint.params.config.word_dim)
    ids, matrix = load_table_vectors(args.vectors)
    index = build_index(ids, list(matrix))
    tokens = tokenize(args.query)
    if not tokens:
        raise TableScoutError("query has no tokens")
    question = Question("query-0", args.query, tokens, "", Split.DEV)
    from .model import encode_question

    vec = encode_question(question, checkpoint.params, store)
    for hit in knn(index, vec, args.k):
        print(json.dumps({"id": hit.id, "distance": round(hit.distance, 6)}))
    return 0


def cmd_eval(args) -> int:
    start = time.monotonic()
    split = Split(args.split)
    checkpoint = load_checkpoint(args.checkpoint)
    corpus = _load_corpus(args.tables, args.questions, split)
    store = load_embeddings(args.embeddings, checkpoint.params.config.word_dim)
    report = metrics_mod.evaluate(
        checkpoint,
        corpus,
        split,
        _parse_ks(args.ks),
        store,
        checkpoint_fingerprint=file_sha256(args.checkpoint),
    )
    Path(args.out).write_text(metrics_mod.report_to_json(report), encoding="utf-8")
    wall = time.monotonic() - start
    inputs = {
        "checkpoint": args.checkpoint,
        "tables": args.tables,
        "questions": args.questions,
        "embeddings": args.embeddings,
    }
    write_manifest(Path(args.out), "eval", {"split": split.value, "ks": args.ks}, inputs, None, wall)
    print(f"eval: {split.value} MRR {report.mrr * 100:.2f} -> {args.out}")
    return 0


def cmd_bm25_eval(args) -> int:
    start = time.monotonic()
    split = Split(args.split)
    corpus = _load_corpus(args.tables, args.questions, split)
    tables = corpus.tables[split]
    questions = corpus.questions[split]
    if not tables or not questions:
        raise TableScoutError(f"split {split.value!r} has no tables or no questions")
    index = build_bm25([t.id for t in tables], [table_document(t) for t in tables])
    ks = _parse_ks(args.ks)
    rankings = []
    for q in questions:
        ranked = [hit.id for hit in bm25_rank(index, q.tokens)]
        rankings.append((ranked, q.table_id))
    mrr, hits = metrics_mod.aggregate(rankings, ks)
    bm25_cfg = {"k1": index.k1, "b": index.b, "epsilon": index.epsilon}
    report = metrics_mod.EvalReport(
        split=split,
        n_questions=len(questions),
        n_tables=len(tables),
        mrr=mrr,
        hits=hits,
        config_fingerprint=sha256_hex(canonical_json_bytes(bm25_cfg)),
        checkpoint_fingerprint="",
    )
    Path(args.out).write_text(metrics_mod.report_to_json(report), encoding="utf-8")
    wall = time.monotonic() - start
    inputs = {"tables": args.tables, "questions": args.questions}
    write_manifest(Path(args.out), "bm25-eval", bm25_cfg, inputs, None, wall)
    print(f"bm25-eval: {split.value} MRR {mrr * 100:.2f} -> {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    variants: list[tuple[str, ModelConfig]]
    if args.config:
        try:
            obj = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise TableScoutError(f"cannot read config {args.config}: {exc}") from exc
        config, _ = parse_train_config(obj)
        variants = [("custom", config)]
    else:
        variants = [
            (
                f"{enc.value}{'+char' if use_char else ''}",
                trainer_mod.gradcheck_config(use_char, enc),
            )
            for enc in (QuestionEncoderKind.BOW, QuestionEncoderKind.LSTM)
            for use_char in (False, True)
        ]
    worst = 0.0
    for name, config in variants:
        err = trainer_mod.finite_diff_check(config, seed=args.seed, tolerance=args.tolerance)
        status = "ok" if err <= args.tolerance else "FAIL"
        print(f"gradcheck {name}: max relative error {err:.3e} [{status}]")
        worst = max(worst, err)
    print(f"gradcheck: worst {worst:.3e} (tolerance {args.tolerance:g})")
    return 0 if worst <= args.tolerance else 1


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tablescout",
        description="Zero-shot table retrieval: dual encoders plus a BM25 baseline.",
    )
    parser.add_argument("--version", action="version", version=f"tablescout {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="validate and normalize a corpus split")
    p.add_argument("--tables", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--split", choices=[s.value for s in Split], required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("synth", help="emit the synthetic acceptance corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--tables", type=int, default=60)
    p.add_argument("--train-tables", type=int, default=40)
    p.add_argument("--questions-per-table", type=int, default=15)
    p.add_argument("--word-dim", type=int, default=16)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("mine", help="build the training tuple set")
    p.add_argument("--tables", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--embeddings", help="word vectors (needed for hard mining)")
    p.add_argument("--dim", type=int, default=500, help="word vector dimension")
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default="both")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("train", help="train the dual encoder")
    p.add_argument("--tables", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--dev-tables", required=True)
    p.add_argument("--dev-questions", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--tuples", required=True)
    p.add_argument("--config", required=True, help="training config JSON")
    p.add_argument("--checkpoint-out", required=True)
    p.add_argument("--report-out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode-tables", help="encode tables into a vector sidecar")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tables", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode_tables)

    p = sub.add_parser("search", help="rank encoded tables for a query")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("-k", type=int, default=5)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="retrieval metrics for a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tables", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--split", choices=[s.value for s in Split], default="dev")
    p.add_argument("--ks", default="1,5,10,50,100")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bm25-eval", help="BM25 baseline metrics on a split")
    p.add_argument("--tables", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--split", choices=[s.value for s in Split], default="dev")
    p.add_argument("--ks", default="1,5,10,50,100")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bm25_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--config", help="training config JSON (default: built-in tiny grid)")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def run(argv: list[str]) -> int:
    threads = os.environ.get("TABLESCOUT_THREADS")
    if threads is not None:
        try:
            if int(threads) < 1:
                raise ValueError
        except ValueError:
            print("error: config: TABLESCOUT_THREADS must be a positive integer", file=sys.stderr)
            return 1
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except TableScoutError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))
