"""Training engines.

Four modes share one mini-batch Adam loop:

* ``train_supervised``: the labeled-only baseline;
* ``jlsd_train``: joint learning by self-distillation. A teacher is first
  trained on the labeled data, a student starts as an exact parameter copy,
  and each iteration the student takes one gradient step on a batch of
  labeled documents plus teacher-pseudo-labeled unlabeled documents. When
  the student's dev score strictly beats the best seen so far, the teacher
  is overwritten with the student's parameters, so the teacher's quality
  never decreases;
* ``train_simple_pretrain``: train on a labeled source corpus, then keep
  training on the target with a fresh optimizer;
* ``train_simple_joint``: train on the target plus a freshly sampled
  same-size slice of the labeled source, the slice renewed every epoch.

Every mode is a deterministic function of (datasets, config, seed): reruns
produce byte-identical checkpoints and reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import Dataset, LabeledDocument, bio_to_phrases, build_vocab, sample_batch
from .crf import nll_and_grad, viterbi
from .encoder import OptimizerState, adam_step, encode_backward, encode_forward
from .errors import ConfigError, DataError
from .metrics import dataset_f1
from .model import Model, init_model, model_tensors

# hyperparameter grids used for tuning; defaults below pick one point of each
BATCH_SIZE_GRID = (4, 8, 16)
LR_LOWER_GRID = (2e-5, 3e-5, 4e-5, 5e-5)  # sized for a pretrained contextual encoder
LR_UPPER_GRID = (1e-4, 2e-4, 5e-4, 1e-3, 5e-3)
RATIO_GRID = (0.25, 0.5, 1.0, 1.5, 2.0, 4.0)


@dataclass
class JlsdConfig:
    """Shared configuration for all training modes.

    ``r`` is the unlabeled-to-labeled sampling ratio: each iteration the
    student sees ``batch_size`` labeled and ``round(r * batch_size)``
    pseudo-labeled documents. ``lr_lower`` applies to the embedding table
    (default raised to 1e-3: cold-start embeddings need larger steps than
    the fine-tuning rates in LR_LOWER_GRID), ``lr_upper`` to everything
    else. ``T = 0`` means evaluate-only, used by degenerate phases.
    """

    T: int = 2000
    r: float = 1.0
    batch_size: int = 8
    lr_lower: float = 1e-3
    lr_upper: float = 1e-3
    eval_every: int = 50
    patience: int = 10
    seed: int = 0
    embed_dim: int = 64
    hidden_dim: int = 64
    min_count: int = 1
    teacher_T: int | None = None  # jlsd teacher phase budget; None = T
    source_T: int | None = None  # pretrain source phase budget; None = T
    source_pool_size: int | None = None  # joint per-epoch source draw; None = |target_train|

    def __post_init__(self):
        checks = [
            (self.T >= 0, "T must be >= 0"),
            (self.r > 0, "r must be > 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.lr_lower >= 0 and self.lr_upper >= 0, "learning rates must be >= 0"),
            (self.eval_every >= 1, "eval_every must be >= 1"),
            (self.patience >= 1, "patience must be >= 1"),
            (self.embed_dim >= 1 and self.hidden_dim >= 1, "model dims must be >= 1"),
            (self.min_count >= 1, "min_count must be >= 1"),
            (self.teacher_T is None or self.teacher_T >= 0, "teacher_T must be >= 0"),
            (self.source_T is None or self.source_T >= 0, "source_T must be >= 0"),
            (
                self.source_pool_size is None or self.source_pool_size >= 0,
                "source_pool_size must be >= 0",
            ),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @property
    def unlabeled_per_batch(self) -> int:
        # round half up: the ratio grid contains values like 0.25 and 1.5
        return int(math.floor(self.r * self.batch_size + 0.5))


@dataclass
class TrainReport:
    """Event log of one training run.

    ``events`` holds one dict per iteration, evaluation, teacher swap, pool
    refresh, or early stop, in order. Serializes to a JSONL stream that is
    byte-identical across reruns with the same seed.
    """

    events: list = field(default_factory=list)
    best_score: float = 0.0
    best_iteration: int = 0
    checkpoint_path: str | None = None
    prior_phase: "TrainReport | None" = None

    @property
    def swap_events(self) -> list[tuple[int, float, float]]:
        return [
            (e["iteration"], e["old_score"], e["new_score"])
            for e in self.events
            if e["event"] == "swap"
        ]

    @property
    def eval_scores(self) -> list[tuple[int, float]]:
        return [
            (e["iteration"], e["dev_f1"]) for e in self.events if e["event"] == "eval"
        ]

    def to_jsonl(self) -> str:
        import json

        lines = []
        if self.prior_phase is not None:
            for e in self.prior_phase.events:
                lines.append(json.dumps({"phase": "pretraining", **e}, sort_keys=True))
        for e in self.events:
            lines.append(json.dumps(e, sort_keys=True))
        lines.append(
            json.dumps(
                {
                    "event": "final",
                    "best_iteration": self.best_iteration,
                    "best_score": self.best_score,
                    "checkpoint": self.checkpoint_path,
                },
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"


def _require_labeled(dataset: Dataset, role: str) -> None:
    if len(dataset) == 0:
        raise DataError(f"{role} dataset is empty")
    if not dataset.labeled:
        raise DataError(f"{role} dataset must be fully labeled")


def _batch_gradients(model: Model, batch) -> tuple[float, float, float, dict]:
    """Mean-per-document NLL and gradients over a mixed gold/pseudo batch."""
    grads = {name: np.zeros_like(arr) for name, arr in model_tensors(model).items()}
    sums = {"gold": 0.0, "pseudo": 0.0}
    counts = {"gold": 0, "pseudo": 0}
    for ld in batch:
        ids = model.vocab.encode(ld.doc.tokens)
        emissions, cache = encode_forward(model.encoder, ids)
        loss, d_emissions, d_crf = nll_and_grad(emissions, model.crf, ld.labels)
        for name, g in encode_backward(model.encoder, cache, d_emissions).items():
            grads[name] += g
        grads["crf.trans"] += d_crf.trans
        grads["crf.start"] += d_crf.start
        grads["crf.end"] += d_crf.end
        sums[ld.label_source] += loss
        counts[ld.label_source] += 1
    n = len(batch)
    for g in grads.values():
        g /= n
    loss_labeled = sums["gold"] / counts["gold"] if counts["gold"] else 0.0
    loss_pseudo = sums["pseudo"] / counts["pseudo"] if counts["pseudo"] else 0.0
    total = (sums["gold"] + sums["pseudo"]) / n
    return loss_labeled, loss_pseudo, total, grads


def _train_loop(
    model: Model,
    dev: Dataset,
    config: JlsdConfig,
    data_rng: np.random.Generator,
    make_batch,
    events: list,
    on_new_best=None,
) -> tuple[Model, float, int]:
    """The shared loop: evaluate at iteration 0, then Adam steps with
    periodic dev evaluation, best-checkpoint tracking, and patience-based
    early stopping on strict improvement."""
    opt = OptimizerState(lr_lower=config.lr_lower, lr_upper=config.lr_upper)
    params = model_tensors(model)

    best_score = dataset_f1(model, dev).f1
    best_model = model.copy()
    best_iteration = 0
    events.append({"event": "eval", "iteration": 0, "dev_f1": best_score, "improved": True})

    stale = 0
    for it in range(1, config.T + 1):
        batch = make_batch(it, data_rng)
        loss_labeled, loss_pseudo, loss, grads = _batch_gradients(model, batch)
        adam_step(params, grads, opt)
        events.append(
            {
                "event": "iteration",
                "iteration": it,
                "loss": loss,
                "loss_labeled": loss_labeled,
                "loss_pseudo": loss_pseudo,
            }
        )
        if it % config.eval_every == 0 or it == config.T:
            score = dataset_f1(model, dev).f1
            improved = score > best_score
            events.append(
                {"event": "eval", "iteration": it, "dev_f1": score, "improved": improved}
            )
            if improved:
                if on_new_best is not None:
                    on_new_best(it, best_score, score)
                best_score = score
                best_model = model.copy()
                best_iteration = it
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    events.append({"event": "early_stop", "iteration": it})
                    break
    return best_model, best_score, best_iteration


def train_supervised(
    train: Dataset,
    dev: Dataset,
    config: JlsdConfig,
    init: Model | None = None,
    vocab=None,
) -> tuple[Model, TrainReport]:
    """Mini-batch Adam training of the CRF negative log-likelihood.

    Evaluates exact-match F1 on ``dev`` every ``eval_every`` iterations and
    returns the best-on-dev checkpoint. ``init`` continues training from an
    existing model (fresh optimizer state); otherwise parameters are
    initialized from the seed and the vocabulary is built from ``train``.
    """
    _require_labeled(train, "train")
    _require_labeled(dev, "dev")
    init_ss, data_ss = np.random.SeedSequence(config.seed).spawn(2)
    if init is not None:
        model = init.copy()
    else:
        if vocab is None:
            vocab = build_vocab(train, config.min_count)
        model = init_model(vocab, config.embed_dim, config.hidden_dim, np.random.default_rng(init_ss))

    events: list = []
    best_model, best_score, best_iteration = _train_loop(
        model,
        dev,
        config,
        np.random.default_rng(data_ss),
        lambda it, rng: sample_batch(train, config.batch_size, rng),
        events,
    )
    return best_model, TrainReport(events, best_score, best_iteration)


def pseudo_label(teacher: Model, docs) -> list[LabeledDocument]:
    """Hard pseudo-labels: Viterbi-decode each document with the teacher.

    Accepts Documents or LabeledDocuments (existing labels are ignored);
    unknown tokens map to UNK through the teacher's vocabulary.
    """
    out = []
    for d in docs:
        doc = d.doc if isinstance(d, LabeledDocument) else d
        emissions, _ = encode_forward(teacher.encoder, teacher.vocab.encode(doc.tokens))
        labels, _ = viterbi(emissions, teacher.crf)
        phrases = frozenset(p for _, p in bio_to_phrases(doc.tokens, labels))
        out.append(
            LabeledDocument(
                doc=doc, labels=tuple(int(l) for l in labels),
                keyphrases=phrases, label_source="pseudo",
            )
        )
    return out


def jlsd_train(
    labeled: Dataset, unlabeled: Dataset, dev: Dataset, config: JlsdConfig
) -> tuple[Model, TrainReport]:
    """Joint learning by self-distillation.

    First trains a teacher on the labeled data alone, then runs ``T``
    student iterations. Each iteration samples ``batch_size`` labeled and
    ``round(r * batch_size)`` unlabeled documents, pseudo-labels the latter
    with the current teacher on the fly, and takes one gradient step on the
    combined batch with equal per-document weight. Whenever the student's
    dev score strictly exceeds the best seen, the teacher's parameters are
    overwritten with the student's and a swap event is recorded, which makes
    the sequence of swap scores strictly increasing. Returns the best-on-dev
    student.
    """
    _require_labeled(labeled, "labeled")
    _require_labeled(dev, "dev")
    if len(unlabeled) == 0:
        raise DataError("unlabeled dataset is empty; use train_supervised instead")
    unlabeled_docs = [
        d.doc if isinstance(d, LabeledDocument) else d for d in unlabeled.documents
    ]

    vocab = build_vocab(list(labeled.documents) + unlabeled_docs, config.min_count)
    # the teacher phase gets its own seed so the student loop's sampling
    # stream matches what train_supervised would draw under config.seed
    teacher_config = replace(
        config,
        seed=config.seed + 1,
        T=config.teacher_T if config.teacher_T is not None else config.T,
    )
    teacher, teacher_report = train_supervised(labeled, dev, teacher_config, vocab=vocab)

    student = teacher.copy()  # the student starts as an exact parameter copy
    teacher_tensors = model_tensors(teacher)
    student_tensors = model_tensors(student)

    events: list = []
    k = config.unlabeled_per_batch

    def make_batch(it, rng):
        batch = sample_batch(labeled, config.batch_size, rng)
        if k > 0:
            batch = batch + pseudo_label(teacher, sample_batch(unlabeled_docs, k, rng))
        return batch

    def swap_teacher(iteration, old_score, new_score):
        for name, arr in teacher_tensors.items():
            np.copyto(arr, student_tensors[name])
        events.append(
            {
                "event": "swap",
                "iteration": iteration,
                "old_score": old_score,
                "new_score": new_score,
            }
        )

    _, data_ss = np.random.SeedSequence(config.seed).spawn(2)
    best_model, best_score, best_iteration = _train_loop(
        student, dev, config, np.random.default_rng(data_ss), make_batch, events,
        on_new_best=swap_teacher,
    )
    report = TrainReport(events, best_score, best_iteration, prior_phase=teacher_report)
    return best_model, report


def train_simple_pretrain(
    source: Dataset, target_train: Dataset, target_dev: Dataset, config: JlsdConfig
) -> tuple[Model, TrainReport]:
    """Train on the labeled source corpus, then keep training on the target.

    The target phase starts from the source phase's best checkpoint with a
    fresh optimizer. Both phases share one vocabulary built over source and
    target so the embedding table carries over. ``config.source_T`` bounds
    the source phase (0 skips it entirely).
    """
    _require_labeled(source, "source")
    _require_labeled(target_train, "target_train")
    _require_labeled(target_dev, "target_dev")
    vocab = build_vocab(
        list(source.documents) + list(target_train.documents), config.min_count
    )
    source_config = replace(
        config, T=config.source_T if config.source_T is not None else config.T
    )
    warm, source_report = train_supervised(source, target_dev, source_config, vocab=vocab)
    best, report = train_supervised(target_train, target_dev, config, init=warm)
    report.prior_phase = source_report
    return best, report


def train_simple_joint(
    source: Dataset, target_train: Dataset, target_dev: Dataset, config: JlsdConfig
) -> tuple[Model, TrainReport]:
    """Train on the target plus a per-epoch refreshed sample of the source.

    At the start of every epoch (one epoch = enough batches to cover the
    pool once) ``source_pool_size`` source documents (default:
    ``|target_train|``) are drawn and concatenated with the target training
    set; batches are then sampled uniformly from that pool. Evaluation and
    early stopping behave exactly as in :func:`train_supervised`; with a
    source draw of zero the run is identical to it.
    """
    _require_labeled(source, "source")
    _require_labeled(target_train, "target_train")
    _require_labeled(target_dev, "target_dev")
    vocab = build_vocab(
        list(source.documents) + list(target_train.documents), config.min_count
    )
    draw = (
        config.source_pool_size
        if config.source_pool_size is not None
        else len(target_train)
    )
    pool = list(target_train.documents)
    epoch_len = max(1, math.ceil((len(target_train) + draw) / config.batch_size))

    events: list = []

    def make_batch(it, rng):
        nonlocal pool
        if draw > 0 and (it - 1) % epoch_len == 0:
            pool = list(target_train.documents) + sample_batch(source, draw, rng)
            events.append(
                {"event": "pool_refresh", "iteration": it, "pool_size": len(pool)}
            )
        return sample_batch(pool, config.batch_size, rng)

    init_ss, data_ss = np.random.SeedSequence(config.seed).spawn(2)
    model = init_model(
        vocab, config.embed_dim, config.hidden_dim, np.random.default_rng(init_ss)
    )
    best_model, best_score, best_iteration = _train_loop(
        model, target_dev, config, np.random.default_rng(data_ss), make_batch, events
    )
    return best_model, TrainReport(events, best_score, best_iteration)
