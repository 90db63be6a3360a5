"""Exact k-nearest-neighbor search over a fixed set of vectors.

Brute force is cheap at this corpus scale and, unlike an approximate index,
verifiable against a full-sort oracle. Queries sort by euclidean distance
ascending with ties broken by ascending id, so insertion order never leaks
into results.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SearchIndexError


@dataclass(frozen=True)
class RankedHit:
    id: str
    distance: float


@dataclass
class VectorIndex:
    dim: int
    ids: list[str]
    matrix: np.ndarray  # (N, dim) float64

    @property
    def size(self) -> int:
        return len(self.ids)


def build_index(ids: Sequence[str], vectors: Sequence[np.ndarray]) -> VectorIndex:
    ids = [str(i) for i in ids]
    if len(ids) != len(vectors):
        raise SearchIndexError("ids and vectors differ in length")
    if len(set(ids)) != len(ids):
        raise SearchIndexError("duplicate ids in index")
    if not ids:
        return VectorIndex(dim=0, ids=[], matrix=np.zeros((0, 0)))
    rows = [np.asarray(v, dtype=np.float64).ravel() for v in vectors]
    dim = rows[0].shape[0]
    if any(r.shape[0] != dim for r in rows):
        raise SearchIndexError("vectors have mixed dimensions")
    matrix = np.stack(rows)
    if not np.all(np.isfinite(matrix)):
        raise SearchIndexError("non-finite vector in index")
    return VectorIndex(dim=dim, ids=ids, matrix=matrix)


def knn(index: VectorIndex, query: np.ndarray, k: int) -> list[RankedHit]:
    """The min(k, N) nearest vectors by euclidean distance."""
    if k < 1:
        raise SearchIndexError("k must be >= 1")
    if index.size == 0:
        return []
    q = np.asarray(query, dtype=np.float64).ravel()
    if q.shape[0] != index.dim:
        raise SearchIndexError(f"query dim {q.shape[0]} != index dim {index.dim}")
    sq = ((index.matrix - q) ** 2).sum(axis=1)
    order = np.lexsort((np.asarray(index.ids), sq))
    top = order[: min(k, index.size)]
    return [RankedHit(index.ids[i], float(np.sqrt(sq[i]))) for i in top]
