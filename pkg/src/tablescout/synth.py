"""Synthetic retrieval corpus with per-table vocabulary themes.

Each table owns a disjoint set of invented content words used for its
column names and cells; its questions mix gold-table content words with
shared function-word noise. Held-out tables therefore test zero-shot
generalization: their vocabulary never occurs in training, only their
(random) word vectors do. The generator also emits the word-vector file,
so the whole pipeline runs from one seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import ColumnType, Table

NOISE_TOKENS = (
    "what", "is", "the", "of", "in", "for", "which", "who", "show", "list",
    "find", "many", "how", "much", "with", "value", "row", "give", "me", "all",
)

_CONSONANTS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"


@dataclass
class SynthCorpus:
    tables: list[Table]  # first n_train are the train pool, rest dev
    n_train_tables: int
    questions: list[tuple[str, str]]  # (question text, table id)
    vectors: dict[str, np.ndarray]
    word_dim: int

    def split_tables(self) -> tuple[list[Table], list[Table]]:
        return self.tables[: self.n_train_tables], self.tables[self.n_train_tables :]

    def split_questions(self) -> tuple[list[tuple[str, str]], list[tuple[str, str]]]:
        train_ids = {t.id for t in self.tables[: self.n_train_tables]}
        train = [q for q in self.questions if q[1] in train_ids]
        dev = [q for q in self.questions if q[1] not in train_ids]
        return train, dev


def _invent_word(rng: np.random.Generator, used: set[str]) -> str:
    while True:
        n_syllables = int(rng.integers(2, 4))
        word = "".join(
            _CONSONANTS[int(rng.integers(len(_CONSONANTS)))]
            + _VOWELS[int(rng.integers(len(_VOWELS)))]
            for _ in range(n_syllables)
        )
        if word not in used and word not in NOISE_TOKENS:
            used.add(word)
            return word


def generate(
    seed: int,
    n_tables: int = 60,
    n_train_tables: int = 40,
    questions_per_table: int = 15,
    word_dim: int = 16,
    theme_size: int = 20,
    n_rows: int = 4,
    theme_spread: float = 0.35,
) -> SynthCorpus:
    """Word vectors are theme-clustered: each theme has a random centroid and
    its tokens scatter around it (relative spread `theme_spread`), mimicking
    the semantic clustering of real distributional embeddings. Without that
    structure nothing would tie held-out vocabulary to the training
    vocabulary and zero-shot transfer could not exist."""
    if not 0 < n_train_tables < n_tables:
        raise ValueError("need 0 < n_train_tables < n_tables")
    rng = np.random.default_rng(seed)
    used: set[str] = set()
    tables: list[Table] = []
    questions: list[tuple[str, str]] = []
    vectors: dict[str, np.ndarray] = {}
    for tok in NOISE_TOKENS:
        vectors[tok] = rng.normal(0.0, 1.0, size=word_dim) / np.sqrt(word_dim)

    for t in range(n_tables):
        centroid = rng.normal(0.0, 1.0, size=word_dim)
        centroid /= np.linalg.norm(centroid)
        theme = [_invent_word(rng, used) for _ in range(theme_size)]
        for tok in theme:
            jitter = rng.normal(0.0, 1.0, size=word_dim) / np.sqrt(word_dim)
            vectors[tok] = centroid + theme_spread * jitter

        def pick(k: int) -> list[str]:
            idx = rng.choice(len(theme), size=k, replace=False)
            return [theme[i] for i in sorted(idx.tolist())]

        names = [" ".join(pick(2)), pick(1)[0], pick(1)[0]]
        types = [ColumnType.TEXT, ColumnType.TEXT, ColumnType.REAL]
        rows = []
        for _ in range(n_rows):
            rows.append(
                [
                    " ".join(pick(int(rng.integers(1, 4)))),
                    " ".join(pick(int(rng.integers(1, 3)))),
                    str(int(rng.integers(0, 1000))),
                ]
            )
        table_id = f"synth-{t:03d}"
        tables.append(Table(table_id, names, types, rows))

        # content tokens actually visible in this table's text
        content = sorted(
            {tok for name in names for tok in name.split()}
            | {tok for row in rows for cell in row[:2] for tok in cell.split()}
        )
        for _ in range(questions_per_table):
            k_content = int(rng.integers(4, 8))
            k_noise = int(rng.integers(2, 5))
            toks = [content[i] for i in rng.choice(len(content), size=min(k_content, len(content)), replace=False)]
            toks += [NOISE_TOKENS[i] for i in rng.choice(len(NOISE_TOKENS), size=k_noise, replace=False)]
            perm = rng.permutation(len(toks))
            questions.append((" ".join(toks[i] for i in perm), table_id))

    return SynthCorpus(tables, n_train_tables, questions, vectors, word_dim)


def write(corpus: SynthCorpus, out_dir: str | Path) -> dict[str, Path]:
    """Write tables/questions JSONL per split plus the word-vector file."""
    from .corpus import save_tables

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_tables, dev_tables = corpus.split_tables()
    train_qs, dev_qs = corpus.split_questions()
    paths = {
        "tables_train": out / "tables.train.jsonl",
        "tables_dev": out / "tables.dev.jsonl",
        "questions_train": out / "questions.train.jsonl",
        "questions_dev": out / "questions.dev.jsonl",
        "embeddings": out / "embeddings.txt",
    }
    save_tables(train_tables, paths["tables_train"])
    save_tables(dev_tables, paths["tables_dev"])
    for key, qs in (("questions_train", train_qs), ("questions_dev", dev_qs)):
        with open(paths[key], "w", encoding="utf-8") as fh:
            for text, table_id in qs:
                fh.write('{"question": "%s", "table_id": "%s"}\n' % (text, table_id))
    with open(paths["embeddings"], "w", encoding="utf-8") as fh:
        fh.write(f"{len(corpus.vectors)} {corpus.word_dim}\n")
        for tok in sorted(corpus.vectors):
            vec = " ".join(repr(float(v)) for v in corpus.vectors[tok])
            fh.write(f"{tok} {vec}\n")
    return paths
