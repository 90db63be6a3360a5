"""Tables, questions, and the tokenizer that feeds both the encoders and BM25.

Tables arrive as JSONL (`{"id", "header", "types", "rows"}`), questions as
JSONL (`{"question", "table_id"}`). Numeric ("real") columns never expose
their cell values to the neural encoders; they collapse to the reserved
REAL_TOKEN in `column_views`.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

from .errors import CorpusError

log = logging.getLogger(__name__)

# Reserved vocabulary symbol for numeric cell values. Written uppercase
# verbatim; exempt from lowercasing because it is not natural text.
REAL_TOKEN = "<REAL>"


class Split(str, Enum):
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"


class ColumnType(str, Enum):
    TEXT = "text"
    REAL = "real"


@dataclass(frozen=True)
class Table:
    id: str
    column_names: list[str]
    column_types: list[ColumnType]
    rows: list[list[str]]

    @property
    def n_columns(self) -> int:
        return len(self.column_names)

    @property
    def n_rows(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class Question:
    id: str
    raw_text: str
    tokens: list[str]
    table_id: str
    split: Split


@dataclass(frozen=True)
class ColumnView:
    """Token-level view of one column: its name and one token list per cell.

    Real columns carry the single pseudo-cell [[REAL_TOKEN]] regardless of
    how many rows the table has.
    """

    name_tokens: list[str]
    value_tokens: list[list[str]]


def tokenize(text: str) -> list[str]:
    """Lowercase `text` and split it into word and punctuation tokens.

    Whitespace-separated chunks are split further: every punctuation or
    symbol character becomes its own token, except a hyphen joining two
    alphanumerics and a decimal point between two digits, which stay inside
    the word. REAL_TOKEN passes through verbatim.
    """
    tokens: list[str] = []
    for chunk in text.split():
        if chunk == REAL_TOKEN:
            tokens.append(chunk)
        else:
            tokens.extend(_split_chunk(chunk.lower()))
    return tokens


def _split_chunk(chunk: str) -> list[str]:
    tokens: list[str] = []
    word: list[str] = []
    for i, ch in enumerate(chunk):
        keep = ch.isalnum()
        if not keep and 0 < i < len(chunk) - 1:
            if ch == "-":
                keep = chunk[i - 1].isalnum() and chunk[i + 1].isalnum()
            elif ch == ".":
                keep = chunk[i - 1].isdigit() and chunk[i + 1].isdigit()
        if keep:
            word.append(ch)
        else:
            if word:
                tokens.append("".join(word))
                word.clear()
            tokens.append(ch)
    if word:
        tokens.append("".join(word))
    return tokens


def _read_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"{path}: {exc}") from exc
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise CorpusError(f"{path}: line {lineno}: expected a JSON object")
        yield lineno, obj


def _coerce_cell(value, path, lineno) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        raise CorpusError(f"{path}: line {lineno}: boolean cell value")
    if isinstance(value, (int, float)):
        return str(value)
    raise CorpusError(f"{path}: line {lineno}: cell must be a string or number")


def load_tables(path: str | Path) -> list[Table]:
    """Parse a tables JSONL file, preserving file order.

    Raises CorpusError (naming the offending line) on malformed JSON,
    ragged rows, unknown column types, or duplicate table ids.
    """
    tables: list[Table] = []
    seen: set[str] = set()
    for lineno, obj in _read_jsonl(path):
        try:
            table_id = obj["id"]
            header = obj["header"]
            types = obj["types"]
            rows = obj["rows"]
        except KeyError as exc:
            raise CorpusError(f"{path}: line {lineno}: missing key {exc}") from exc
        if not isinstance(table_id, str) or not table_id:
            raise CorpusError(f"{path}: line {lineno}: id must be a non-empty string")
        if table_id in seen:
            raise CorpusError(f"{path}: line {lineno}: duplicate table id {table_id!r}")
        n = len(header)
        if n < 1:
            raise CorpusError(f"{path}: line {lineno}: table has no columns")
        if len(types) != n:
            raise CorpusError(
                f"{path}: line {lineno}: {len(types)} types for {n} columns"
            )
        try:
            col_types = [ColumnType(str(t).lower()) for t in types]
        except ValueError as exc:
            raise CorpusError(f"{path}: line {lineno}: unknown column type: {exc}") from exc
        parsed_rows: list[list[str]] = []
        for r, row in enumerate(rows):
            if len(row) != n:
                raise CorpusError(
                    f"{path}: line {lineno}: row {r} has {len(row)} cells, expected {n}"
                )
            parsed_rows.append([_coerce_cell(c, path, lineno) for c in row])
        seen.add(table_id)
        tables.append(Table(table_id, [str(h) for h in header], col_types, parsed_rows))
    return tables


def save_tables(tables: Iterable[Table], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in tables:
            obj = {
                "id": t.id,
                "header": t.column_names,
                "types": [ct.value for ct in t.column_types],
                "rows": t.rows,
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_questions(
    path: str | Path,
    split: Split,
    table_ids: set[str] | None = None,
) -> list[Question]:
    """Parse a questions JSONL file, tokenizing and stamping `split`.

    Question ids are synthesized from the split name and 1-based line
    number, so they are stable across reruns. When `table_ids` is given,
    records referencing an absent table are dropped; the drop count is
    logged as a warning rather than raised.
    """
    questions: list[Question] = []
    dropped = 0
    for lineno, obj in _read_jsonl(path):
        try:
            text = obj["question"]
            table_id = obj["table_id"]
        except KeyError as exc:
            raise CorpusError(f"{path}: line {lineno}: missing key {exc}") from exc
        if not isinstance(text, str) or not isinstance(table_id, str):
            raise CorpusError(f"{path}: line {lineno}: question and table_id must be strings")
        tokens = tokenize(text)
        if not tokens:
            raise CorpusError(f"{path}: line {lineno}: question has no tokens")
        if table_ids is not None and table_id not in table_ids:
            dropped += 1
            continue
        questions.append(
            Question(f"{split.value}-{lineno}", text, tokens, table_id, split)
        )
    if dropped:
        log.warning("%s: dropped %d question(s) referencing missing tables", path, dropped)
    return questions


def save_questions(questions: Iterable[Question], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in questions:
            fh.write(
                json.dumps({"question": q.raw_text, "table_id": q.table_id}, ensure_ascii=False)
                + "\n"
            )


def column_views(table: Table) -> list[ColumnView]:
    """One ColumnView per column; Real columns collapse to [[REAL_TOKEN]].

    Zero-row text columns yield an empty value list; the encoder treats the
    missing value embedding as the zero vector.
    """
    views: list[ColumnView] = []
    for c, (name, ctype) in enumerate(zip(table.column_names, table.column_types)):
        if ctype is ColumnType.REAL:
            values = [[REAL_TOKEN]]
        else:
            values = [tokenize(row[c]) for row in table.rows]
        views.append(ColumnView(tokenize(name), values))
    return views


@dataclass
class Corpus:
    """Loaded tables and questions, keyed by split. Read-only after load."""

    tables: dict[Split, list[Table]] = field(default_factory=dict)
    questions: dict[Split, list[Question]] = field(default_factory=dict)

    def table_index(self, split: Split) -> dict[str, Table]:
        return {t.id: t for t in self.tables.get(split, [])}

    def question_index(self, split: Split) -> dict[str, Question]:
        return {q.id: q for q in self.questions.get(split, [])}
