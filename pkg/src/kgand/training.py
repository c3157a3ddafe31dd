"""Embedding training: negative sampling, smoothed BCE, Adam, early stop.

Positives come from the train split; each one is corrupted into k
negatives by replacing the head or the tail (uniformly chosen) with a
random entity different from the original.  The loss is binary
cross-entropy with label smoothing over all scored items, optimized
with bias-corrected Adam.  Gradients are derived in closed form per
variant; a finite-difference suite in the tests is the safety net.

Training is deterministic in sequential mode: identical seeds and
config reproduce identical loss curves bit for bit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .errors import ConfigError, TrainingError
from .features import NumericFeatureTable, TextFeatureTable
from .kg import DatasetSplit, KnowledgeGraph
from .model import ModelParams, init_params, representation_matrix, sigmoid

logger = logging.getLogger(__name__)

# Documented search space; values outside only warn.
DIM_CHOICES = (128, 256, 512)
LR_RANGE = (0.0001, 0.01)
NEGATIVES_RANGE = (1, 50)
BATCH_CHOICES = (128, 256, 512)
SMOOTHING_RANGE = (0.001, 1.0)


@dataclass
class TrainConfig:
    """Hyperparameters; defaults are the tuned values for OC-style graphs."""

    embedding_dim: int = 512
    learning_rate: float = 0.0003
    negatives_per_triple: int = 12
    batch_size: int = 512
    smoothing: float = 0.001
    max_epochs: int = 1000
    eval_frequency: int = 10
    patience: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.embedding_dim not in DIM_CHOICES:
            logger.warning("embedding_dim %d outside documented choices %s", self.embedding_dim, DIM_CHOICES)
        if not LR_RANGE[0] <= self.learning_rate < LR_RANGE[1]:
            logger.warning("learning_rate %g outside documented range %s", self.learning_rate, LR_RANGE)
        if not NEGATIVES_RANGE[0] <= self.negatives_per_triple < NEGATIVES_RANGE[1]:
            logger.warning("negatives_per_triple %d outside documented range %s", self.negatives_per_triple, NEGATIVES_RANGE)
        if self.batch_size not in BATCH_CHOICES:
            logger.warning("batch_size %d outside documented choices %s", self.batch_size, BATCH_CHOICES)
        if not SMOOTHING_RANGE[0] <= self.smoothing < SMOOTHING_RANGE[1]:
            logger.warning("smoothing %g outside documented range %s", self.smoothing, SMOOTHING_RANGE)

    @classmethod
    def oc_defaults(cls, **overrides) -> "TrainConfig":
        return cls(**overrides)

    @classmethod
    def aminer_defaults(cls, **overrides) -> "TrainConfig":
        base = dict(embedding_dim=128, learning_rate=0.0001, negatives_per_triple=32,
                    batch_size=512, smoothing=0.1)
        base.update(overrides)
        return cls(**base)


@dataclass
class AdamState:
    """Per-parameter first/second moment accumulators plus step counter."""

    moments1: dict[str, np.ndarray]
    moments2: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: ModelParams) -> "AdamState":
        return cls(
            moments1={k: np.zeros_like(v) for k, v in model.named_arrays().items()},
            moments2={k: np.zeros_like(v) for k, v in model.named_arrays().items()},
        )


@dataclass
class LinkPredictionMetrics:
    mrr: float
    hits1: float
    hits3: float
    hits10: float


@dataclass
class TrainHistory:
    """Per-epoch mean losses and per-evaluation validation metrics."""

    losses: list[float] = field(default_factory=list)
    evals: list[tuple[int, LinkPredictionMetrics]] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int | None = None


def sample_negatives(
    positives: np.ndarray, k: int, num_entities: int, rng: np.random.Generator
) -> np.ndarray:
    """k corruptions per positive, each differing in exactly one slot.

    The corrupted slot (head or tail) is chosen uniformly, the
    replacement entity uniformly among all entities except the original
    slot value.  Deterministic for a fixed generator state.
    """
    if k < 1:
        raise ConfigError(f"need at least one negative per triple, got {k}")
    if num_entities < 2:
        raise ConfigError("cannot corrupt triples with fewer than 2 entities")
    positives = np.asarray(positives, dtype=np.int64)
    corrupted = np.repeat(positives, k, axis=0)
    n = corrupted.shape[0]
    corrupt_tail = rng.integers(0, 2, size=n).astype(bool)
    original = np.where(corrupt_tail, corrupted[:, 2], corrupted[:, 0])
    draw = rng.integers(0, num_entities - 1, size=n)
    draw = draw + (draw >= original)  # uniform over entities != original
    corrupted[:, 0] = np.where(corrupt_tail, corrupted[:, 0], draw)
    corrupted[:, 2] = np.where(corrupt_tail, draw, corrupted[:, 2])
    return corrupted


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def bce_with_targets(scores: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean BCE against soft targets, in the stabilized log-sum-exp form.

    Returns the loss and dloss/dscore = (sigmoid(s) - t) / N.
    """
    scores = np.asarray(scores, dtype=float)
    targets = np.asarray(targets, dtype=float)
    items = targets * _softplus(-scores) + (1.0 - targets) * _softplus(scores)
    grad = (sigmoid(scores) - targets) / scores.size
    return float(np.mean(items)), grad


def smoothed_bce(
    scores: np.ndarray, positive: np.ndarray, smoothing: float
) -> tuple[float, np.ndarray]:
    """BCE with smoothed targets 1-eps (positives) and eps (negatives)."""
    if not 0.0 <= smoothing < 1.0:
        raise ConfigError(f"smoothing must be in [0, 1), got {smoothing}")
    positive = np.asarray(positive, dtype=bool)
    targets = np.where(positive, 1.0 - smoothing, smoothing)
    return bce_with_targets(np.asarray(scores), targets)


def adam_step(
    model: ModelParams, grads: dict[str, np.ndarray], state: AdamState, lr: float
) -> None:
    """One bias-corrected Adam update, applied in place to every tensor."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, param in model.named_arrays().items():
        g = grads[name]
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient in parameter {name!r} at step {t}")
        m = state.moments1[name]
        v = state.moments2[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        param -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
        if not np.isfinite(param).all():
            raise TrainingError(f"non-finite values in parameter {name!r} after step {t}")
    model.invalidate_cache()


def _fusion_forward(model: ModelParams, idx: np.ndarray, literal_mat, year_arr):
    """Representations for a batch of entity indices, with intermediates."""
    e = model.entity_emb[idx]
    if model.variant == "unimodal":
        return e, {}
    lit = literal_mat[idx]
    concat = np.concatenate([e, lit], axis=1)
    if model.variant == "glin":
        return concat @ model.combine_w.T, {"concat": concat}
    years = year_arr[idx]
    full = np.concatenate([concat, years[:, None]], axis=1)
    gate = sigmoid(
        e @ model.gate_entity_w.T
        + concat @ model.gate_concat_w.T
        + years[:, None] * model.gate_year_w[None, :]
        + model.gate_bias[None, :]
    )
    candidate = np.tanh(full @ model.candidate_w.T)
    out = gate * candidate + (1.0 - gate) * e
    return out, {"e": e, "concat": concat, "full": full, "years": years,
                 "gate": gate, "candidate": candidate}


def _fusion_backward(model: ModelParams, d_out: np.ndarray, saved: dict,
                     grads: dict[str, np.ndarray]) -> np.ndarray:
    """Backprop through fusion; accumulates into grads, returns d(entity rows)."""
    if model.variant == "unimodal":
        return d_out
    if model.variant == "glin":
        concat = saved["concat"]
        grads["combine_w"] += d_out.T @ concat
        return d_out @ model.combine_w[:, : model.dim]
    e, concat, full = saved["e"], saved["concat"], saved["full"]
    years, gate, candidate = saved["years"], saved["gate"], saved["candidate"]
    d_gate_pre = d_out * (candidate - e) * gate * (1.0 - gate)
    d_cand_pre = d_out * gate * (1.0 - candidate * candidate)
    grads["candidate_w"] += d_cand_pre.T @ full
    grads["gate_entity_w"] += d_gate_pre.T @ e
    grads["gate_concat_w"] += d_gate_pre.T @ concat
    grads["gate_year_w"] += (d_gate_pre * years[:, None]).sum(axis=0)
    grads["gate_bias"] += d_gate_pre.sum(axis=0)
    h = model.dim
    return (
        d_gate_pre @ model.gate_entity_w
        + (d_gate_pre @ model.gate_concat_w)[:, :h]
        + (d_cand_pre @ model.candidate_w)[:, :h]
        + d_out * (1.0 - gate)
    )


def forward_loss(
    model: ModelParams,
    triples: np.ndarray,
    targets: np.ndarray,
    literal_mat: np.ndarray | None = None,
    year_arr: np.ndarray | None = None,
) -> float:
    """Loss only; used by the finite-difference gradient checks."""
    triples = np.asarray(triples, dtype=np.int64)
    idx = np.concatenate([triples[:, 0], triples[:, 2]])
    reps, _ = _fusion_forward(model, idx, literal_mat, year_arr)
    n = triples.shape[0]
    scores = np.sum(reps[:n] * model.relation_emb[triples[:, 1]] * reps[n:], axis=1)
    loss, _ = bce_with_targets(scores, targets)
    return loss


def forward_backward(
    model: ModelParams,
    triples: np.ndarray,
    targets: np.ndarray,
    literal_mat: np.ndarray | None = None,
    year_arr: np.ndarray | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and closed-form gradients for one batch of scored triples."""
    triples = np.asarray(triples, dtype=np.int64)
    n = triples.shape[0]
    idx = np.concatenate([triples[:, 0], triples[:, 2]])
    reps, saved = _fusion_forward(model, idx, literal_mat, year_arr)
    heads, tails = reps[:n], reps[n:]
    rels = model.relation_emb[triples[:, 1]]
    scores = np.sum(heads * rels * tails, axis=1)
    loss, d_scores = bce_with_targets(scores, targets)

    grads = {name: np.zeros_like(arr) for name, arr in model.named_arrays().items()}
    d_heads = d_scores[:, None] * rels * tails
    d_tails = d_scores[:, None] * rels * heads
    d_rels = d_scores[:, None] * heads * tails
    np.add.at(grads["relation_emb"], triples[:, 1], d_rels)
    d_entity_rows = _fusion_backward(model, np.concatenate([d_heads, d_tails]), saved, grads)
    np.add.at(grads["entity_emb"], idx, d_entity_rows)
    return loss, grads


def _literal_inputs(model, kg, text, numeric):
    if model.variant == "unimodal":
        return None, None
    literal_mat = (
        text.matrix(kg.num_entities) if text is not None
        else np.zeros((kg.num_entities, model.literal_dim))
    )
    year_arr = numeric.array(kg.num_entities) if numeric is not None else np.zeros(kg.num_entities)
    return literal_mat, year_arr


def train_model(
    kg: KnowledgeGraph,
    split: DatasetSplit,
    variant: str = "unimodal",
    text: TextFeatureTable | None = None,
    numeric: NumericFeatureTable | None = None,
    config: TrainConfig | None = None,
    log_stream: TextIO | None = None,
) -> tuple[ModelParams, TrainHistory]:
    """Train on the train split; early-stop on filtered validation MRR.

    Returns the checkpoint with the best validation MRR seen (the final
    parameters when no evaluation ever ran).  Writes one ``epoch<TAB>
    mean_loss`` line per epoch and one ``eval`` line per evaluation to
    ``log_stream`` when given.
    """
    config = config or TrainConfig()
    train_triples = np.array(split.triples(kg, "train"), dtype=np.int64)
    if train_triples.size == 0:
        raise ConfigError("train split is empty")
    valid_triples = np.array(split.triples(kg, "valid"), dtype=np.int64).reshape(-1, 3)
    all_triples = np.array(kg.object_triples, dtype=np.int64)

    literal_dim = text.dim if (text is not None and variant != "unimodal") else 0
    model = init_params(
        variant,
        kg.num_entities,
        kg.num_relations,
        config.embedding_dim,
        literal_dim=literal_dim,
        seed=config.seed,
    )
    literal_mat, year_arr = _literal_inputs(model, kg, text, numeric)
    state = AdamState.for_model(model)
    rng = np.random.default_rng(config.seed + 1)
    history = TrainHistory()

    best_mrr = -np.inf
    best_params: ModelParams | None = None
    evals_without_improvement = 0
    eps = config.smoothing
    k = config.negatives_per_triple

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_triples))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            positives = train_triples[order[start : start + config.batch_size]]
            negatives = sample_negatives(positives, k, kg.num_entities, rng)
            batch = np.concatenate([positives, negatives])
            targets = np.concatenate(
                [np.full(len(positives), 1.0 - eps), np.full(len(negatives), eps)]
            )
            loss, grads = forward_backward(model, batch, targets, literal_mat, year_arr)
            adam_step(model, grads, state, config.learning_rate)
            epoch_losses.append(loss)
        mean_loss = float(np.mean(epoch_losses))
        if not np.isfinite(mean_loss):
            raise TrainingError(f"non-finite epoch loss at epoch {epoch}")
        history.losses.append(mean_loss)
        history.stopped_epoch = epoch
        if log_stream is not None:
            log_stream.write(f"{epoch}\t{mean_loss:.6f}\n")

        if config.eval_frequency > 0 and epoch % config.eval_frequency == 0 and len(valid_triples):
            metrics = eval_link_prediction(model, valid_triples, all_triples, text, numeric)
            history.evals.append((epoch, metrics))
            if log_stream is not None:
                log_stream.write(
                    f"eval\t{epoch}\t{metrics.mrr:.6f}\t{metrics.hits1:.6f}"
                    f"\t{metrics.hits3:.6f}\t{metrics.hits10:.6f}\n"
                )
            logger.info("epoch %d: loss %.6f, valid MRR %.4f", epoch, mean_loss, metrics.mrr)
            if metrics.mrr > best_mrr:
                best_mrr = metrics.mrr
                best_params = model.copy()
                history.best_epoch = epoch
                evals_without_improvement = 0
            else:
                evals_without_improvement += 1
                if evals_without_improvement >= config.patience:
                    logger.info("early stop at epoch %d (no MRR gain in %d evaluations)",
                                epoch, config.patience)
                    break

    final = best_params if best_params is not None else model
    if not final.all_finite():
        raise TrainingError("trained parameters contain non-finite values")
    return final, history


def _filtered_rank(scores: np.ndarray, true_idx: int, known: set[int]) -> float:
    """Realistic rank: mean of optimistic and pessimistic over ties."""
    s_true = scores[true_idx]
    if len(known) > 1:
        drop = np.fromiter((i for i in known if i != true_idx), dtype=np.int64)
        keep = np.ones(scores.shape[0], dtype=bool)
        keep[drop] = False
        candidates = scores[keep]
    else:
        candidates = scores
    greater = int(np.sum(candidates > s_true))
    greater_equal = int(np.sum(candidates >= s_true))
    return (greater + 1 + greater_equal) / 2.0


def eval_link_prediction(
    model: ModelParams,
    eval_triples: np.ndarray,
    filter_triples: np.ndarray,
    text: TextFeatureTable | None = None,
    numeric: NumericFeatureTable | None = None,
) -> LinkPredictionMetrics:
    """Filtered ranking over all entities, both head and tail corruption.

    The filter set must contain every known true triple; other true
    corruptions are removed from the candidate list before ranking.
    """
    eval_triples = np.asarray(eval_triples, dtype=np.int64)
    reps = representation_matrix(model, text, numeric, cache=False)

    tails_of: dict[tuple[int, int], set[int]] = {}
    heads_of: dict[tuple[int, int], set[int]] = {}
    for h, r, t in np.asarray(filter_triples, dtype=np.int64):
        tails_of.setdefault((int(h), int(r)), set()).add(int(t))
        heads_of.setdefault((int(r), int(t)), set()).add(int(h))

    ranks = []
    for h, r, t in eval_triples:
        h, r, t = int(h), int(r), int(t)
        rel = model.relation_emb[r]
        tail_scores = (reps[h] * rel) @ reps.T
        ranks.append(_filtered_rank(tail_scores, t, tails_of.get((h, r), {t})))
        head_scores = reps @ (rel * reps[t])
        ranks.append(_filtered_rank(head_scores, h, heads_of.get((r, t), {h})))

    ranks = np.array(ranks)
    return LinkPredictionMetrics(
        mrr=float(np.mean(1.0 / ranks)),
        hits1=float(np.mean(ranks <= 1.0)),
        hits3=float(np.mean(ranks <= 3.0)),
        hits10=float(np.mean(ranks <= 10.0)),
    )
