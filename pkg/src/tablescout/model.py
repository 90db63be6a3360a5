"""The dual encoder: a character LSTM, a four-stage table encoder, and a
question encoder with bag-of-words and word-LSTM variants.

Forward passes are written against the autodiff ops, so the same code
serves plain-numpy inference and tape-recorded training. Text snippets
(column names, cells, questions) embed as [word mean || char mean]; each
column goes through an optional dense layer and an MLP; columns average
into the table embedding; both final embeddings are L2-normalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

import numpy as np

from . import autodiff as ad
from .corpus import REAL_TOKEN, ColumnView, Question, Table, column_views
from .embeddings import EmbeddingStore
from .errors import ModelError


class QuestionEncoderKind(str, Enum):
    BOW = "bow"
    LSTM = "lstm"


@dataclass(frozen=True)
class ModelConfig:
    word_dim: int = 500
    char_dim: int = 200
    use_char: bool = True
    question_encoder: QuestionEncoderKind = QuestionEncoderKind.BOW
    column_intermediate_dim: int = 1000
    mlp_hidden_dims: tuple[int, ...] = (750, 500)
    out_dim: int = 500
    question_mlp_dims: tuple[int, ...] = (500, 500)
    word_lstm_dim: int = 500
    margin: float = 0.5

    def validate(self) -> None:
        dims = (
            self.word_dim,
            self.char_dim,
            self.column_intermediate_dim,
            self.out_dim,
            self.word_lstm_dim,
            *self.mlp_hidden_dims,
            *self.question_mlp_dims,
        )
        if not self.mlp_hidden_dims or not self.question_mlp_dims:
            raise ModelError("mlp_hidden_dims and question_mlp_dims must be non-empty")
        if any(d < 1 for d in dims):
            raise ModelError("all dimensions must be >= 1")
        if self.out_dim != self.mlp_hidden_dims[-1]:
            raise ModelError("out_dim must equal the last column-MLP width")
        if self.margin <= 0:
            raise ModelError("margin must be > 0")
        if not self.use_char:
            # Without the final combine layer the word part is the question
            # embedding, so its width must match the table side.
            if self.question_encoder is QuestionEncoderKind.BOW:
                if self.question_mlp_dims[-1] != self.out_dim:
                    raise ModelError("without chars, question MLP must end at out_dim")
            elif self.word_lstm_dim != self.out_dim:
                raise ModelError("without chars, word_lstm_dim must equal out_dim")

    @property
    def snippet_dim(self) -> int:
        return self.word_dim + (self.char_dim if self.use_char else 0)

    @property
    def question_word_dim(self) -> int:
        if self.question_encoder is QuestionEncoderKind.BOW:
            return self.question_mlp_dims[-1]
        return self.word_lstm_dim

    def to_dict(self) -> dict:
        return {
            "word_dim": self.word_dim,
            "char_dim": self.char_dim,
            "use_char": self.use_char,
            "question_encoder": self.question_encoder.value,
            "column_intermediate_dim": self.column_intermediate_dim,
            "mlp_hidden_dims": list(self.mlp_hidden_dims),
            "out_dim": self.out_dim,
            "question_mlp_dims": list(self.question_mlp_dims),
            "word_lstm_dim": self.word_lstm_dim,
            "margin": self.margin,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "ModelConfig":
        kwargs = dict(obj)
        if "question_encoder" in kwargs:
            kwargs["question_encoder"] = QuestionEncoderKind(str(kwargs["question_encoder"]).lower())
        for key in ("mlp_hidden_dims", "question_mlp_dims"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class Alphabet:
    """Character-to-row mapping for the char embedding table.

    Built from the train split only; row 0 is reserved for characters never
    seen in training, so dev/test text cannot grow the parameter space.
    """

    chars: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {c: i + 1 for i, c in enumerate(self.chars)})

    @property
    def size(self) -> int:
        return len(self.chars) + 1

    def row(self, ch: str) -> int:
        return self._index.get(ch, 0)

    def to_dict(self) -> dict:
        return {"chars": "".join(self.chars)}

    @classmethod
    def from_dict(cls, obj: Mapping) -> "Alphabet":
        return cls(tuple(obj["chars"]))


def build_alphabet(tables: Iterable[Table], questions: Iterable[Question]) -> Alphabet:
    chars: set[str] = set()
    for q in questions:
        for tok in q.tokens:
            if tok != REAL_TOKEN:
                chars.update(tok)
    for t in tables:
        for view in column_views(t):
            for tok in view.name_tokens:
                chars.update(tok)
            for cell in view.value_tokens:
                for tok in cell:
                    if tok != REAL_TOKEN:
                        chars.update(tok)
    return Alphabet(tuple(sorted(chars)))


@dataclass
class ModelParams:
    """Named tensors plus the config and alphabet that shape them.

    Tensor values are float64 ndarrays during normal use; the trainer swaps
    in autodiff Nodes to record gradients. All tensors are trainable (the
    pretrained word matrix lives in the EmbeddingStore, not here).
    """

    config: ModelConfig
    alphabet: Alphabet
    tensors: dict[str, Any]


_LSTM_GATES = ("i", "f", "g", "o")


def _glorot(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


def _init_lstm(tensors: dict, prefix: str, hidden: int, inp: int, rng) -> None:
    for gate in _LSTM_GATES:
        tensors[f"{prefix}/W_{gate}"] = _glorot(rng, hidden, inp)
        tensors[f"{prefix}/U_{gate}"] = _glorot(rng, hidden, hidden)
        bias = np.zeros(hidden)
        if gate == "f":
            bias += 1.0  # forget-gate bias starts open
        tensors[f"{prefix}/b_{gate}"] = bias


def init_params(config: ModelConfig, alphabet: Alphabet, seed: int) -> ModelParams:
    """Deterministic initialization: Glorot-uniform dense/LSTM weights, zero
    biases (LSTM forget bias 1), uniform(-0.05, 0.05) char embeddings, zero
    UNK/REAL word rows. The char subsystem is always materialized so a
    checkpoint's shape depends only on (config, alphabet)."""
    config.validate()
    rng = np.random.default_rng(seed)
    t: dict[str, np.ndarray] = {}

    dc, dw = config.char_dim, config.word_dim
    t["char/embedding"] = rng.uniform(-0.05, 0.05, size=(alphabet.size, dc))
    t["char/real"] = rng.uniform(-0.05, 0.05, size=dc)
    _init_lstm(t, "char_lstm", dc, dc, rng)

    column_in = 2 * config.snippet_dim
    if config.use_char:
        t["column_dense/W"] = _glorot(rng, config.column_intermediate_dim, column_in)
        t["column_dense/b"] = np.zeros(config.column_intermediate_dim)
        mlp_in = config.column_intermediate_dim
    else:
        mlp_in = column_in
    prev = mlp_in
    for i, width in enumerate(config.mlp_hidden_dims):
        t[f"column_mlp/{i}/W"] = _glorot(rng, width, prev)
        t[f"column_mlp/{i}/b"] = np.zeros(width)
        prev = width

    if config.question_encoder is QuestionEncoderKind.BOW:
        prev = dw
        for i, width in enumerate(config.question_mlp_dims):
            t[f"question_mlp/{i}/W"] = _glorot(rng, width, prev)
            t[f"question_mlp/{i}/b"] = np.zeros(width)
            prev = width
    else:
        _init_lstm(t, "word_lstm", config.word_lstm_dim, dw, rng)

    if config.use_char:
        t["question_combine/W"] = _glorot(rng, config.out_dim, config.question_word_dim + dc)
        t["question_combine/b"] = np.zeros(config.out_dim)

    t["word/unk"] = np.zeros(dw)
    t["word/real"] = np.zeros(dw)
    return ModelParams(config, alphabet, t)


def lstm_step(x, h, c, gates: Mapping[str, Any]):
    """One LSTM cell step: sigmoid input/forget/output gates, tanh candidate
    and output squashing, no peepholes. Returns (h', c')."""
    if not (
        isinstance(x, ad.Node)
        or isinstance(h, ad.Node)
        or isinstance(c, ad.Node)
        or any(isinstance(v, ad.Node) for v in gates.values())
    ):
        # plain-numpy path, associated exactly like the tape ops below so
        # both modes are bitwise identical
        i = 0.5 * (1.0 + np.tanh(0.5 * ((gates["W_i"] @ x + gates["U_i"] @ h) + gates["b_i"])))
        f = 0.5 * (1.0 + np.tanh(0.5 * ((gates["W_f"] @ x + gates["U_f"] @ h) + gates["b_f"])))
        g = np.tanh((gates["W_g"] @ x + gates["U_g"] @ h) + gates["b_g"])
        o = 0.5 * (1.0 + np.tanh(0.5 * ((gates["W_o"] @ x + gates["U_o"] @ h) + gates["b_o"])))
        c_next = (f * c) + (i * g)
        return o * np.tanh(c_next), c_next
    i = ad.sigmoid(ad.add(ad.add(ad.matvec(gates["W_i"], x), ad.matvec(gates["U_i"], h)), gates["b_i"]))
    f = ad.sigmoid(ad.add(ad.add(ad.matvec(gates["W_f"], x), ad.matvec(gates["U_f"], h)), gates["b_f"]))
    g = ad.tanh(ad.add(ad.add(ad.matvec(gates["W_g"], x), ad.matvec(gates["U_g"], h)), gates["b_g"]))
    o = ad.sigmoid(ad.add(ad.add(ad.matvec(gates["W_o"], x), ad.matvec(gates["U_o"], h)), gates["b_o"]))
    c_next = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_next = ad.mul(o, ad.tanh(c_next))
    return h_next, c_next


def _gates(tensors: Mapping[str, Any], prefix: str) -> dict[str, Any]:
    return {
        f"{kind}_{gate}": tensors[f"{prefix}/{kind}_{gate}"]
        for gate in _LSTM_GATES
        for kind in ("W", "U", "b")
    }


def _char_token_vector(
    token: str,
    params: ModelParams,
    tensors: Mapping[str, Any],
    memo: dict | None = None,
):
    """Final char-LSTM hidden state for one token; REAL_TOKEN bypasses the
    LSTM and contributes its dedicated trainable vector. `memo` caches one
    vector per distinct token within a single forward pass."""
    if token == REAL_TOKEN:
        return tensors["char/real"]
    if memo is not None and token in memo:
        return memo[token]
    cfg = params.config
    gates = _gates(tensors, "char_lstm")
    emb = tensors["char/embedding"]
    h = np.zeros(cfg.char_dim)
    c = np.zeros(cfg.char_dim)
    for ch in token:
        x = ad.row(emb, params.alphabet.row(ch))
        h, c = lstm_step(x, h, c, gates)
    if memo is not None:
        memo[token] = h
    return h


def char_encode(tokens: list[str], params: ModelParams, tensors: Mapping[str, Any] | None = None):
    """Mean over tokens of each token's final char-LSTM hidden state."""
    if not tokens:
        raise ModelError("char_encode: empty token list")
    tensors = params.tensors if tensors is None else tensors
    return ad.mean_n([_char_token_vector(tok, params, tensors) for tok in tokens])


def _word_vector(token: str, tensors: Mapping[str, Any], store: EmbeddingStore):
    idx = store.vocab.get(token)
    if idx is not None:
        return store.matrix[idx]
    if token == REAL_TOKEN:
        return tensors["word/real"]
    return tensors["word/unk"]


def _word_mean(tokens: list[str], tensors, store: EmbeddingStore, dim: int):
    if not tokens:
        return np.zeros(dim)
    return ad.mean_n([_word_vector(tok, tensors, store) for tok in tokens])


def _snippet_vector(
    tokens: list[str],
    params: ModelParams,
    tensors,
    store: EmbeddingStore,
    memo: dict | None = None,
):
    """[word mean || char mean] for a token sequence (char part iff use_char).
    Empty sequences embed as the zero vector."""
    cfg = params.config
    word = _word_mean(tokens, tensors, store, cfg.word_dim)
    if not cfg.use_char:
        return word
    if tokens:
        chars = ad.mean_n([_char_token_vector(tok, params, tensors, memo) for tok in tokens])
    else:
        chars = np.zeros(cfg.char_dim)
    return ad.concat([word, chars])


def encode_column(
    view: ColumnView,
    params: ModelParams,
    store: EmbeddingStore,
    _memo: dict | None = None,
):
    """Column pipeline: name and row-value snippet embeddings are
    concatenated, passed through the dense layer (with chars) or kept as-is
    (without), then through the column MLP (ReLU hiddens, linear output)."""
    cfg = params.config
    tensors = params.tensors
    name_emb = _snippet_vector(view.name_tokens, params, tensors, store, _memo)
    if view.value_tokens:
        cells = [_snippet_vector(cell, params, tensors, store, _memo) for cell in view.value_tokens]
        rows_emb = ad.mean_n(cells)
    else:
        rows_emb = np.zeros(cfg.snippet_dim)
    x = ad.concat([name_emb, rows_emb])
    if cfg.use_char:
        x = ad.relu(ad.add(ad.matvec(tensors["column_dense/W"], x), tensors["column_dense/b"]))
    h = x
    last = len(cfg.mlp_hidden_dims) - 1
    for i in range(len(cfg.mlp_hidden_dims)):
        z = ad.add(ad.matvec(tensors[f"column_mlp/{i}/W"], h), tensors[f"column_mlp/{i}/b"])
        h = z if i == last else ad.relu(z)
    return h


def encode_table(
    table: Table,
    params: ModelParams,
    store: EmbeddingStore,
    _memo: dict | None = None,
):
    """Mean of the column embeddings, L2-normalized."""
    cols = [encode_column(v, params, store, _memo) for v in column_views(table)]
    try:
        return ad.l2_normalize(ad.mean_n(cols))
    except ValueError as exc:
        raise ModelError(f"table {table.id}: zero-vector embedding") from exc


def encode_question(
    question: Question,
    params: ModelParams,
    store: EmbeddingStore,
    _memo: dict | None = None,
):
    """BOW: word-mean through the question MLP; LSTM: final hidden state of
    the word LSTM. With chars the word part is combined with the char mean
    through a final linear layer. Output is L2-normalized."""
    if not question.tokens:
        raise ModelError(f"question {question.id}: no tokens")
    cfg = params.config
    tensors = params.tensors
    if cfg.question_encoder is QuestionEncoderKind.BOW:
        h = _word_mean(question.tokens, tensors, store, cfg.word_dim)
        last = len(cfg.question_mlp_dims) - 1
        for i in range(len(cfg.question_mlp_dims)):
            z = ad.add(ad.matvec(tensors[f"question_mlp/{i}/W"], h), tensors[f"question_mlp/{i}/b"])
            h = z if i == last else ad.relu(z)
        word_part = h
    else:
        h = np.zeros(cfg.word_lstm_dim)
        c = np.zeros(cfg.word_lstm_dim)
        gates = _gates(tensors, "word_lstm")
        for tok in question.tokens:
            h, c = lstm_step(_word_vector(tok, tensors, store), h, c, gates)
        word_part = h
    if cfg.use_char:
        chars = ad.mean_n(
            [_char_token_vector(tok, params, tensors, _memo) for tok in question.tokens]
        )
        combined = ad.concat([word_part, chars])
        word_part = ad.add(
            ad.matvec(tensors["question_combine/W"], combined), tensors["question_combine/b"]
        )
    try:
        return ad.l2_normalize(word_part)
    except ValueError as exc:
        raise ModelError(f"question {question.id}: zero-vector embedding") from exc
