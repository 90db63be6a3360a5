"""Ranking metrics (reciprocal rank, MRR, Hit@K) and split-level evaluation.

Hit@K is the fraction of questions whose gold table lands in the top K of
the full-pool ranking; with a single gold table per question this is the
quantity usually reported as "P@K". Serialized reports carry percentages
rounded to two decimals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from .corpus import Corpus, Split
from .errors import EvalError
from .index import build_index, knn
from .model import encode_question, encode_table
from .serialization import Checkpoint, canonical_json_bytes, sha256_hex

DEFAULT_KS = (1, 5, 10, 50, 100)


def reciprocal_rank(ranked_ids: Sequence[str], gold_id: str) -> float:
    """1/rank of the gold id (1-based); 0.0 when absent."""
    for pos, rid in enumerate(ranked_ids, start=1):
        if rid == gold_id:
            return 1.0 / pos
    return 0.0


def hit_at_k(ranked_ids: Sequence[str], gold_id: str, k: int) -> int:
    if k < 1:
        raise EvalError("k must be >= 1")
    return 1 if gold_id in list(ranked_ids)[:k] else 0


@dataclass
class EvalReport:
    split: Split
    n_questions: int
    n_tables: int
    mrr: float
    hits: dict[int, float]
    config_fingerprint: str
    checkpoint_fingerprint: str


def config_fingerprint(config_dict: dict) -> str:
    return sha256_hex(canonical_json_bytes(config_dict))


def aggregate(
    ranked_per_question: Sequence[tuple[Sequence[str], str]],
    ks: Sequence[int],
) -> tuple[float, dict[int, float]]:
    """Average reciprocal ranks and hit rates over (ranking, gold) pairs."""
    if not ranked_per_question:
        raise EvalError("no questions to aggregate")
    n = len(ranked_per_question)
    rr_total = 0.0
    hit_totals = {k: 0 for k in ks}
    for ranked, gold in ranked_per_question:
        rr_total += reciprocal_rank(ranked, gold)
        for k in ks:
            hit_totals[k] += hit_at_k(ranked, gold, k)
    return rr_total / n, {k: hit_totals[k] / n for k in ks}


def evaluate(
    checkpoint: Checkpoint,
    corpus: Corpus,
    split: Split,
    ks: Sequence[int],
    store,
    checkpoint_fingerprint: str = "",
) -> EvalReport:
    """Encode the split's full table pool once, rank it for every question,
    and average the per-question metrics."""
    tables = corpus.tables.get(split, [])
    questions = corpus.questions.get(split, [])
    if not tables or not questions:
        raise EvalError(f"split {split.value!r} has no tables or no questions")
    params = checkpoint.params
    index = build_index(
        [t.id for t in tables], [encode_table(t, params, store) for t in tables]
    )
    rankings = []
    for q in questions:
        hits = knn(index, encode_question(q, params, store), len(tables))
        rankings.append(([h.id for h in hits], q.table_id))
    mrr, hit_rates = aggregate(rankings, ks)
    return EvalReport(
        split=split,
        n_questions=len(questions),
        n_tables=len(tables),
        mrr=mrr,
        hits=hit_rates,
        config_fingerprint=config_fingerprint(params.config.to_dict()),
        checkpoint_fingerprint=checkpoint_fingerprint,
    )


def report_to_json(report: EvalReport) -> str:
    """Serialized form: mrr and p_at_k as percentages, two decimals."""
    obj = {
        "split": report.split.value,
        "n_questions": report.n_questions,
        "n_tables": report.n_tables,
        "mrr": round(report.mrr * 100.0, 2),
        "p_at_k": {str(k): round(v * 100.0, 2) for k, v in sorted(report.hits.items())},
        "config_fingerprint": report.config_fingerprint,
        "checkpoint_fingerprint": report.checkpoint_fingerprint,
    }
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"
