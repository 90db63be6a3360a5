"""Pretrained word vectors plus the sqrtn combiner used for mining signatures.

The store is loaded from a whitespace-separated text file ("token v1 ... vD"
per line, optional "count dim" header). Two extra zero rows are appended for
the UNK and REAL symbols; those rows stay zero here -- their trainable
counterparts live in the model parameters.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import REAL_TOKEN, Question
from .errors import EmbeddingError

log = logging.getLogger(__name__)


@dataclass
class EmbeddingStore:
    dim: int
    vocab: dict[str, int]
    matrix: np.ndarray  # (V + 2, dim) float64, rows V and V+1 are UNK / REAL
    unk_index: int
    real_index: int

    @property
    def special_rows(self) -> dict[str, int]:
        return {"UNK": self.unk_index, "REAL": self.real_index}


def _looks_like_header(parts: list[str]) -> bool:
    if len(parts) != 2:
        return False
    try:
        int(parts[0]), int(parts[1])
    except ValueError:
        return False
    return True


def load_embeddings(path: str | Path, expected_dim: int) -> EmbeddingStore:
    """Load word vectors, appending zero-initialized UNK and REAL rows.

    Duplicate tokens keep their first occurrence (counted and logged).
    Raises EmbeddingError on a dimension mismatch, an unparseable or
    non-finite value, or an empty file.
    """
    if expected_dim < 1:
        raise EmbeddingError("expected_dim must be >= 1")
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise EmbeddingError(f"{path}: {exc}") from exc

    vocab: dict[str, int] = {}
    rows: list[np.ndarray] = []
    duplicates = 0
    first_content_line = True
    for lineno, line in enumerate(raw.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if first_content_line and _looks_like_header(parts):
            header_dim = int(parts[1])
            if header_dim != expected_dim:
                raise EmbeddingError(
                    f"{path}: header declares dim {header_dim}, expected {expected_dim}"
                )
            first_content_line = False
            continue
        first_content_line = False
        token, values = parts[0], parts[1:]
        if len(values) != expected_dim:
            raise EmbeddingError(
                f"{path}: line {lineno}: {len(values)} values for dim {expected_dim}"
            )
        try:
            vec = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError as exc:
            raise EmbeddingError(f"{path}: line {lineno}: bad float: {exc}") from exc
        if not np.all(np.isfinite(vec)):
            raise EmbeddingError(f"{path}: line {lineno}: non-finite value")
        if token in vocab:
            duplicates += 1
            continue
        vocab[token] = len(rows)
        rows.append(vec)

    if not rows:
        raise EmbeddingError(f"{path}: no word vectors found")
    if duplicates:
        log.warning("%s: ignored %d duplicate token(s), first occurrence kept", path, duplicates)

    matrix = np.vstack(rows + [np.zeros(expected_dim), np.zeros(expected_dim)])
    matrix.flags.writeable = False
    return EmbeddingStore(
        dim=expected_dim,
        vocab=vocab,
        matrix=matrix,
        unk_index=len(rows),
        real_index=len(rows) + 1,
    )


def lookup(store: EmbeddingStore, token: str) -> np.ndarray:
    """Pretrained row if known, the REAL row for REAL_TOKEN, else the UNK row."""
    idx = store.vocab.get(token)
    if idx is None:
        idx = store.real_index if token == REAL_TOKEN else store.unk_index
    return store.matrix[idx]


def sqrtn_combine(
    vectors: Sequence[np.ndarray],
    weights: Sequence[float] | None = None,
) -> np.ndarray:
    """(sum_i w_i v_i) / sqrt(sum_i w_i^2); weights default to all ones."""
    vecs = list(vectors)
    if not vecs:
        raise EmbeddingError("sqrtn_combine: empty vector list")
    if weights is None:
        ws = np.ones(len(vecs))
    else:
        ws = np.asarray(list(weights), dtype=np.float64)
        if ws.shape[0] != len(vecs):
            raise EmbeddingError("sqrtn_combine: vectors and weights differ in length")
    denom = float(np.sqrt(np.sum(ws * ws)))
    if denom == 0.0:
        raise EmbeddingError("sqrtn_combine: all-zero weights")
    stacked = np.stack([np.asarray(v, dtype=np.float64) for v in vecs])
    return (ws[:, None] * stacked).sum(axis=0) / denom


def question_signature(store: EmbeddingStore, question: Question) -> np.ndarray:
    """sqrtn-combined signature over the frozen store; used only for mining."""
    if not question.tokens:
        raise EmbeddingError(f"question {question.id}: no tokens")
    return sqrtn_combine([lookup(store, t) for t in question.tokens])


def signature_matrix(store: EmbeddingStore, questions: Sequence[Question]) -> np.ndarray:
    """Stack question signatures into an (N, dim) matrix aligned with `questions`."""
    if not questions:
        return np.zeros((0, store.dim))
    return np.stack([question_signature(store, q) for q in questions])
