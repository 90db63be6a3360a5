"""Training-tuple construction: gold positives, hardest in-corpus negatives,
and random negatives.

Hard mining is exact nearest-neighbor search over the frozen question
signatures: for a question with gold table id1, the closest other question
whose table differs supplies the negative (id1, that question). Ties break
toward the smaller question index. A random draw that lands on a same-table
question emits nothing; it is not retried.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Question
from .errors import SamplingError


class Label(Enum):
    POSITIVE = 1
    NEGATIVE = 0


class Provenance(str, Enum):
    GOLD = "gold"
    HARD = "hard"
    RANDOM = "random"


class Strategy(str, Enum):
    RANDOM_ONLY = "random"
    HARD_ONLY = "hard"
    BOTH = "both"


@dataclass(frozen=True)
class TrainTuple:
    question_id: str
    table_id: str
    label: Label
    provenance: Provenance


def mine_hard_negatives(
    questions: Sequence[Question],
    signatures: np.ndarray,
) -> list[TrainTuple]:
    """For each question, pair its gold table with the nearest question
    (euclidean over signatures) whose gold table differs."""
    n = len(questions)
    if signatures.shape[0] != n:
        raise SamplingError("signatures not aligned with questions")
    table_ids = np.array([q.table_id for q in questions])
    if len(set(table_ids.tolist())) < 2:
        raise SamplingError("hard mining needs at least two distinct table ids")
    tuples: list[TrainTuple] = []
    for i, q in enumerate(questions):
        diffs = signatures - signatures[i]
        sq = (diffs * diffs).sum(axis=1)
        sq = np.where(table_ids != q.table_id, sq, np.inf)
        # argmin returns the first minimum, which is the tie rule
        j = int(np.argmin(sq))
        tuples.append(
            TrainTuple(questions[j].id, q.table_id, Label.NEGATIVE, Provenance.HARD)
        )
    return tuples


def sample_random_negatives(questions: Sequence[Question], seed: int) -> list[TrainTuple]:
    """One uniform draw over the other questions per question; emit a
    negative only when the draw's table differs (no retry)."""
    n = len(questions)
    if n < 2:
        raise SamplingError("random sampling needs at least two questions")
    rng = np.random.default_rng(seed)
    tuples: list[TrainTuple] = []
    for i, q in enumerate(questions):
        j = int(rng.integers(0, n - 1))
        if j >= i:
            j += 1
        other = questions[j]
        if other.table_id != q.table_id:
            tuples.append(
                TrainTuple(other.id, q.table_id, Label.NEGATIVE, Provenance.RANDOM)
            )
    return tuples


def build_training_set(
    questions: Sequence[Question],
    strategy: Strategy,
    seed: int,
    signatures: np.ndarray | None = None,
) -> list[TrainTuple]:
    """Gold positives plus the strategy's negatives, shuffled with a seeded
    PRNG. `signatures` is required whenever the strategy mines hard
    negatives."""
    if not questions:
        raise SamplingError("no questions")
    tuples = [
        TrainTuple(q.id, q.table_id, Label.POSITIVE, Provenance.GOLD) for q in questions
    ]
    if strategy in (Strategy.HARD_ONLY, Strategy.BOTH):
        if signatures is None:
            raise SamplingError("hard mining requires question signatures")
        tuples.extend(mine_hard_negatives(questions, signatures))
    if strategy in (Strategy.RANDOM_ONLY, Strategy.BOTH):
        tuples.extend(sample_random_negatives(questions, seed))
    shuffle_rng = np.random.default_rng([seed, 1])
    order = shuffle_rng.permutation(len(tuples))
    return [tuples[i] for i in order]


def save_tuples(tuples: Sequence[TrainTuple], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in tuples:
            obj = {
                "question_id": t.question_id,
                "table_id": t.table_id,
                "label": t.label.value,
                "provenance": t.provenance.value,
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_tuples(path: str | Path) -> list[TrainTuple]:
    tuples: list[TrainTuple] = []
    raw = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            tuples.append(
                TrainTuple(
                    str(obj["question_id"]),
                    str(obj["table_id"]),
                    Label(int(obj["label"])),
                    Provenance(str(obj["provenance"])),
                )
            )
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise SamplingError(f"{path}: line {lineno}: bad tuple: {exc}") from exc
    return tuples
