"""Contrastive training of the dual encoder with Adam, plus the
finite-difference gradient audit.

The loss over a (table, question) pair with squared euclidean distance d2
between the two unit-norm embeddings is 0.5*d2 for positives and
0.5*max(0, margin - d2) for negatives; at the margin kink the subgradient
is zero. Checkpoints are written whenever dev MRR strictly improves, and
dev evaluation runs on float32-quantized parameters so a reloaded
checkpoint reproduces the recorded MRR exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from . import metrics
from .corpus import ColumnType, Corpus, Question, Split, Table
from .embeddings import EmbeddingStore
from .errors import TrainerError
from .model import (
    Alphabet,
    ModelConfig,
    ModelParams,
    QuestionEncoderKind,
    build_alphabet,
    encode_question,
    encode_table,
    init_params,
)
from .sampler import Label, Provenance, TrainTuple
from .serialization import Checkpoint, save_checkpoint

log = logging.getLogger(__name__)


@dataclass
class TrainHyper:
    learning_rate: float = 1e-4
    batch_size: int = 128
    max_epochs: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    eval_every: int = 100  # optimizer steps between dev evaluations

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise TrainerError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise TrainerError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise TrainerError("max_epochs must be >= 0")
        if self.eval_every < 1:
            raise TrainerError("eval_every must be >= 1")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in params.tensors.items()},
            v={k: np.zeros_like(a) for k, a in params.tensors.items()},
        )


@dataclass
class TrainReport:
    epoch_losses: list[float]
    dev_mrr: list[tuple[int, float]]  # (step, mrr) trajectory
    best_step: int
    best_dev_mrr: float
    checkpoint_path: str

    def to_dict(self) -> dict:
        return {
            "epoch_losses": self.epoch_losses,
            "dev_mrr": [[s, m] for s, m in self.dev_mrr],
            "best_step": self.best_step,
            "best_dev_mrr": self.best_dev_mrr,
            "checkpoint_path": self.checkpoint_path,
        }


def contrastive_loss(d: float, label: Label, margin: float = 0.5) -> float:
    """0.5*d^2 for positives, 0.5*max(0, margin - d^2) for negatives."""
    if d < 0:
        raise TrainerError("distance must be >= 0")
    if margin <= 0:
        raise TrainerError("margin must be > 0")
    sq = d * d
    if label is Label.POSITIVE:
        return 0.5 * sq
    return 0.5 * max(0.0, margin - sq)


def _forward_batch(
    batch: Sequence[TrainTuple],
    params: ModelParams,
    store: EmbeddingStore,
    table_index: Mapping[str, Table],
    question_index: Mapping[str, Question],
):
    """Mean tuple loss; a Node when params.tensors holds Nodes, a plain
    numpy scalar otherwise. Encodings are cached per id within the batch."""
    margin = params.config.margin
    table_cache: dict[str, object] = {}
    question_cache: dict[str, object] = {}
    char_memo: dict = {}  # one char vector per distinct token per forward pass
    losses = []
    for tup in batch:
        table = table_index.get(tup.table_id)
        question = question_index.get(tup.question_id)
        if table is None:
            raise TrainerError(f"tuple references unknown table {tup.table_id!r}")
        if question is None:
            raise TrainerError(f"tuple references unknown question {tup.question_id!r}")
        if tup.table_id not in table_cache:
            table_cache[tup.table_id] = encode_table(table, params, store, char_memo)
        if tup.question_id not in question_cache:
            question_cache[tup.question_id] = encode_question(question, params, store, char_memo)
        sq = ad.sqdist(table_cache[tup.table_id], question_cache[tup.question_id])
        if tup.label is Label.POSITIVE:
            losses.append(ad.scale(sq, 0.5))
        else:
            losses.append(ad.scale(ad.relu(ad.csub(margin, sq)), 0.5))
    return ad.mean_n(losses)


def batch_loss_and_grads(
    batch: Sequence[TrainTuple],
    params: ModelParams,
    store: EmbeddingStore,
    corpus: Corpus,
    split: Split = Split.TRAIN,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean batch loss and analytic gradients for every tensor; tensors not
    on the loss path get exact zeros."""
    if not batch:
        raise TrainerError("empty batch")
    nodes = {k: ad.Node(a) for k, a in params.tensors.items()}
    live = ModelParams(params.config, params.alphabet, nodes)
    loss = _forward_batch(
        batch, live, store, corpus.table_index(split), corpus.question_index(split)
    )
    if not isinstance(loss, ad.Node):
        # no tracked tensor reached the loss (possible only for rigged inputs)
        return float(loss), {k: np.zeros_like(a) for k, a in params.tensors.items()}
    leaf_grads = ad.backward(loss)
    grads = {
        k: leaf_grads.get(node, np.zeros_like(params.tensors[k]))
        for k, node in nodes.items()
    }
    return float(loss.value), grads


def adam_step(
    params: ModelParams,
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    hyper: TrainHyper,
) -> tuple[ModelParams, AdamState]:
    """Standard bias-corrected Adam update, applied in place per tensor."""
    state.t += 1
    t = state.t
    b1, b2 = hyper.beta1, hyper.beta2
    for name in sorted(params.tensors):
        g = np.asarray(grads[name], dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise TrainerError(f"non-finite gradient in tensor {name!r} at step {t}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        params.tensors[name] -= hyper.learning_rate * m_hat / (np.sqrt(v_hat) + hyper.eps)
    return params, state


def _quantized(params: ModelParams) -> ModelParams:
    """Parameters rounded through the float32 checkpoint representation."""
    return ModelParams(
        params.config,
        params.alphabet,
        {k: a.astype(np.float32).astype(np.float64) for k, a in params.tensors.items()},
    )


def train(
    corpus: Corpus,
    tuples: Sequence[TrainTuple],
    store: EmbeddingStore,
    config: ModelConfig,
    hyper: TrainHyper,
    checkpoint_path: str,
    corpus_fingerprint: str = "",
) -> TrainReport:
    """Seeded epoch shuffles, fixed-size batches (last partial batch kept),
    dev MRR every `eval_every` steps and at the end; the checkpoint is
    overwritten only on strict dev-MRR improvement."""
    hyper.validate()
    config.validate()
    if not tuples:
        raise TrainerError("no training tuples")
    if not corpus.questions.get(Split.DEV) or not corpus.tables.get(Split.DEV):
        raise TrainerError("dev split unavailable; cannot select checkpoints")
    train_tables = corpus.tables.get(Split.TRAIN, [])
    train_questions = corpus.questions.get(Split.TRAIN, [])
    if not train_tables or not train_questions:
        raise TrainerError("train split unavailable")

    alphabet = build_alphabet(train_tables, train_questions)
    params = init_params(config, alphabet, hyper.seed)
    state = AdamState.for_params(params)

    def dev_mrr() -> float:
        snapshot = Checkpoint(_quantized(params), corpus_fingerprint)
        report = metrics.evaluate(snapshot, corpus, Split.DEV, (1,), store)
        return report.mrr

    best = dev_mrr()
    best_step = 0
    save_checkpoint(checkpoint_path, Checkpoint(params, corpus_fingerprint))
    trajectory = [(0, best)]
    log.info("step 0: dev MRR %.4f (initial checkpoint)", best)

    shuffle_rng = np.random.default_rng([hyper.seed, 1])
    step = 0
    epoch_losses: list[float] = []
    for epoch in range(hyper.max_epochs):
        order = shuffle_rng.permutation(len(tuples))
        loss_sum = 0.0
        for start in range(0, len(tuples), hyper.batch_size):
            batch = [tuples[i] for i in order[start : start + hyper.batch_size]]
            loss, grads = batch_loss_and_grads(batch, params, store, corpus)
            adam_step(params, grads, state, hyper)
            loss_sum += loss * len(batch)
            step += 1
            if step % hyper.eval_every == 0:
                mrr = dev_mrr()
                trajectory.append((step, mrr))
                if mrr > best:
                    best, best_step = mrr, step
                    save_checkpoint(checkpoint_path, Checkpoint(params, corpus_fingerprint))
        epoch_losses.append(loss_sum / len(tuples))
        log.info("epoch %d: mean loss %.6f", epoch + 1, epoch_losses[-1])
    if step and step % hyper.eval_every != 0:
        mrr = dev_mrr()
        trajectory.append((step, mrr))
        if mrr > best:
            best, best_step = mrr, step
            save_checkpoint(checkpoint_path, Checkpoint(params, corpus_fingerprint))
    return TrainReport(epoch_losses, trajectory, best_step, best, str(checkpoint_path))


# --- gradient audit -------------------------------------------------------


def gradcheck_config(use_char: bool, encoder: QuestionEncoderKind) -> ModelConfig:
    """Tiny dimensions for the finite-difference audit. The wide margin
    keeps negative pairs inside it so the repulsion branch gets gradients."""
    return ModelConfig(
        word_dim=8,
        char_dim=6,
        use_char=use_char,
        question_encoder=encoder,
        column_intermediate_dim=10,
        mlp_hidden_dims=(12, 8),
        out_dim=8,
        question_mlp_dims=(12, 8),
        word_lstm_dim=8,
        margin=3.0,
    )


def _gradcheck_fixture(
    config: ModelConfig, seed: int
) -> tuple[Corpus, EmbeddingStore, list[TrainTuple], Alphabet]:
    """Synthetic micro-corpus covering every parameter path: a real column,
    an OOV word in a question and in a cell, and both loss branches."""
    words = ["amber", "birch", "cedar", "delta", "ember", "fjord", "grove", "heath"]
    rng = np.random.default_rng(seed)
    matrix = rng.normal(0.0, 0.5, size=(len(words), config.word_dim))
    matrix = np.vstack([matrix, np.zeros(config.word_dim), np.zeros(config.word_dim)])
    matrix.flags.writeable = False
    store = EmbeddingStore(
        dim=config.word_dim,
        vocab={w: i for i, w in enumerate(words)},
        matrix=matrix,
        unk_index=len(words),
        real_index=len(words) + 1,
    )
    tables = [
        Table(
            "ta",
            ["amber birch", "grove"],
            [ColumnType.TEXT, ColumnType.REAL],
            [["cedar delta", "3"], ["ember", "4"]],
        ),
        Table(
            "tb",
            ["fjord"],
            [ColumnType.TEXT],
            [["heath cedar"], ["delta zzplume"]],
        ),
    ]

    def q(qid: str, text: str, table_id: str) -> Question:
        from .corpus import tokenize

        return Question(qid, text, tokenize(text), table_id, Split.TRAIN)

    questions = [
        q("q1", "amber cedar delta", "ta"),
        q("q2", "fjord heath", "tb"),
        q("q3", "ember zzquark grove", "ta"),
        q("q4", "delta birch fjord", "tb"),
    ]
    corpus = Corpus(tables={Split.TRAIN: tables}, questions={Split.TRAIN: questions})
    batch = [
        TrainTuple("q1", "ta", Label.POSITIVE, Provenance.GOLD),
        TrainTuple("q2", "tb", Label.POSITIVE, Provenance.GOLD),
        TrainTuple("q3", "tb", Label.NEGATIVE, Provenance.HARD),
        TrainTuple("q4", "ta", Label.NEGATIVE, Provenance.RANDOM),
    ]
    alphabet = build_alphabet(tables, questions)
    return corpus, store, batch, alphabet


def finite_diff_check(
    config: ModelConfig,
    seed: int = 7,
    tolerance: float = 1e-4,
    h: float = 1e-3,
    _corrupt_tensor: str | None = None,
    on_tensor: Callable[[str, float], None] | None = None,
) -> float:
    """Worst per-tensor relative error between analytic gradients and
    central finite differences (step h, float64 throughout) on the
    micro-corpus. `_corrupt_tensor` is a negative-control hook that
    perturbs one analytic gradient before comparison."""
    config.validate()
    corpus, store, batch, alphabet = _gradcheck_fixture(config, seed)
    params = init_params(config, alphabet, seed)
    _, grads = batch_loss_and_grads(batch, params, store, corpus)
    if _corrupt_tensor is not None:
        if _corrupt_tensor not in grads:
            raise TrainerError(f"unknown tensor {_corrupt_tensor!r}")
        grads[_corrupt_tensor] = grads[_corrupt_tensor] + 1.0

    table_index = corpus.table_index(Split.TRAIN)
    question_index = corpus.question_index(Split.TRAIN)

    def loss_value() -> float:
        return float(ad.val(_forward_batch(batch, params, store, table_index, question_index)))

    worst = 0.0
    for name, arr in params.tensors.items():
        flat = arr.ravel()
        fd = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = loss_value()
            flat[i] = orig - h
            lo = loss_value()
            flat[i] = orig
            fd[i] = (hi - lo) / (2.0 * h)
        analytic = grads[name].ravel()
        diff = float(np.linalg.norm(analytic - fd))
        denom = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(fd)), 1e-12)
        rel = diff / denom if diff > 0.0 else 0.0
        if on_tensor is not None:
            on_tensor(name, rel)
        if rel > tolerance:
            log.warning("gradient mismatch in %s: relative error %.3e", name, rel)
        worst = max(worst, rel)
    return worst
