"""BM25 lexical baseline over whole-table token bags.

A table's document is every column-name token plus every cell token; real
columns contribute their literal numeric tokens here (the baseline sees raw
text, unlike the neural path). Scoring follows Okapi BM25 with k1=1.5,
b=0.75 and a negative-IDF guard: terms whose IDF would go negative (df >
N/2) are scored with epsilon times the mean positive IDF instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import Table, column_views, tokenize
from .errors import Bm25Error
from .index import RankedHit

PARAM_K1 = 1.5
PARAM_B = 0.75
EPSILON = 0.25


def table_document(table: Table) -> list[str]:
    """All tokens of a table: column names first, then cells row-major."""
    tokens: list[str] = []
    for name in table.column_names:
        tokens.extend(tokenize(name))
    for row in table.rows:
        for cell in row:
            tokens.extend(tokenize(cell))
    return tokens


@dataclass
class Bm25Index:
    doc_ids: list[str]
    doc_len: dict[str, int]
    avg_len: float
    term_freqs: dict[str, dict[str, int]]
    doc_freq: dict[str, int]
    n_docs: int
    k1: float = PARAM_K1
    b: float = PARAM_B
    epsilon: float = EPSILON
    idf: dict[str, float] = field(default_factory=dict)
    idf_floor: float = 0.0


def build_bm25(
    doc_ids: Sequence[str],
    documents: Sequence[Sequence[str]],
    k1: float = PARAM_K1,
    b: float = PARAM_B,
    epsilon: float = EPSILON,
) -> Bm25Index:
    if len(doc_ids) != len(documents):
        raise Bm25Error("doc_ids and documents differ in length")
    ids = [str(d) for d in doc_ids]
    if len(set(ids)) != len(ids):
        raise Bm25Error("duplicate document ids")

    term_freqs: dict[str, dict[str, int]] = {}
    doc_freq: dict[str, int] = {}
    doc_len: dict[str, int] = {}
    for doc_id, tokens in zip(ids, documents):
        doc_len[doc_id] = len(tokens)
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for tok, n in counts.items():
            term_freqs.setdefault(tok, {})[doc_id] = n
            doc_freq[tok] = doc_freq.get(tok, 0) + 1

    n_docs = len(ids)
    avg_len = (sum(doc_len.values()) / n_docs) if n_docs else 0.0
    idf = {
        tok: math.log((n_docs - df + 0.5) / (df + 0.5)) for tok, df in doc_freq.items()
    }
    positive = [v for v in idf.values() if v > 0]
    floor = epsilon * (sum(positive) / len(positive)) if positive else 0.0
    return Bm25Index(
        doc_ids=ids,
        doc_len=doc_len,
        avg_len=avg_len,
        term_freqs=term_freqs,
        doc_freq=doc_freq,
        n_docs=n_docs,
        k1=k1,
        b=b,
        epsilon=epsilon,
        idf=idf,
        idf_floor=floor,
    )


def _effective_idf(index: Bm25Index, term: str) -> float:
    raw = index.idf[term]
    return raw if raw >= 0 else index.idf_floor


def bm25_score(index: Bm25Index, query_tokens: Sequence[str], doc_id: str) -> float:
    """Sum over query term occurrences of IDF(t) * tf*(k1+1) / (tf + k1*norm)."""
    if doc_id not in index.doc_len:
        raise Bm25Error(f"unknown document id {doc_id!r}")
    if index.avg_len == 0.0:
        return 0.0
    norm = index.k1 * (1.0 - index.b + index.b * index.doc_len[doc_id] / index.avg_len)
    score = 0.0
    for term in query_tokens:
        postings = index.term_freqs.get(term)
        if not postings:
            continue
        tf = postings.get(doc_id, 0)
        if tf == 0:
            continue
        score += _effective_idf(index, term) * tf * (index.k1 + 1.0) / (tf + norm)
    return score


def bm25_rank(index: Bm25Index, query_tokens: Sequence[str]) -> list[RankedHit]:
    """Full ranking of all documents, descending score, ties by ascending id.

    Scores come from bm25_score itself so ranking and scoring can never
    drift apart, even at float rounding level.
    """
    scored = [(doc_id, bm25_score(index, query_tokens, doc_id)) for doc_id in index.doc_ids]
    scored.sort(key=lambda kv: (-kv[1], kv[0]))
    return [RankedHit(doc_id, score) for doc_id, score in scored]
