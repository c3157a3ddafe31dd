"""Pairwise clustering evaluation against identifier-labeled truth.

Metrics are computed over unordered record pairs within a block: a pair
is a true positive when predicted together and labeled together.  Micro
metrics pool the counts over all blocks; macro metrics average the
per-block percentages.  Degenerate 0/0 ratios resolve to 1 so that a
perfectly predicted all-singleton block scores 100.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from itertools import combinations

from .clustering import Clustering
from .errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class PairCounts:
    """Confusion counts over within-block record pairs."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "PairCounts") -> "PairCounts":
        return PairCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


@dataclass
class BlockResult:
    block_key: str
    counts: PairCounts
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    per_block: list[BlockResult] = field(default_factory=list)
    micro_counts: PairCounts = field(default_factory=PairCounts)
    micro: tuple[float, float, float] = (0.0, 0.0, 0.0)
    macro: tuple[float, float, float] = (0.0, 0.0, 0.0)


def round_half_up(value: float, places: int = 2) -> float:
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def pairwise_counts(predicted: Clustering, truth: dict[str, str]) -> PairCounts:
    """Confusion counts over all labeled record pairs of one block.

    Records without a truth label are excluded with a warning and
    contribute no pairs.
    """
    labeled = [(iri, cid) for iri, cid in sorted(predicted.assignment.items()) if iri in truth]
    dropped = len(predicted.assignment) - len(labeled)
    if dropped:
        logger.warning("block %s: %d unlabeled record(s) excluded from pair counting",
                       predicted.block_key, dropped)
    counts = PairCounts()
    for (iri_a, cid_a), (iri_b, cid_b) in combinations(labeled, 2):
        same_pred = cid_a == cid_b
        same_true = truth[iri_a] == truth[iri_b]
        if same_pred and same_true:
            counts.tp += 1
        elif same_pred:
            counts.fp += 1
        elif same_true:
            counts.fn += 1
        else:
            counts.tn += 1
    return counts


def prf_exact(counts: PairCounts) -> tuple[float, float, float]:
    """Precision/recall/F1 as exact fractions in [0, 1].

    Conventions: P = 1 when no pairs were predicted, R = 1 when no true
    pairs exist, F1 = 0 when P + R = 0.
    """
    precision = 1.0 if counts.tp + counts.fp == 0 else counts.tp / (counts.tp + counts.fp)
    recall = 1.0 if counts.tp + counts.fn == 0 else counts.tp / (counts.tp + counts.fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def prf(counts: PairCounts) -> tuple[float, float, float]:
    """Percentages rounded half-up to two decimals."""
    return tuple(round_half_up(x * 100.0) for x in prf_exact(counts))


def aggregate(per_block: list[tuple[str, PairCounts]]) -> EvalReport:
    """Pool counts for micro metrics; average per-block metrics for macro."""
    if not per_block:
        raise ConfigError("cannot aggregate an empty block list")
    report = EvalReport()
    precisions, recalls, f1s = [], [], []
    for key, counts in per_block:
        p, r, f1 = prf_exact(counts)
        precisions.append(p)
        recalls.append(r)
        f1s.append(f1)
        report.per_block.append(
            BlockResult(
                block_key=key,
                counts=counts,
                precision=round_half_up(p * 100.0),
                recall=round_half_up(r * 100.0),
                f1=round_half_up(f1 * 100.0),
            )
        )
        report.micro_counts = report.micro_counts + counts
    report.micro = prf(report.micro_counts)
    n = len(per_block)
    report.macro = (
        round_half_up(sum(precisions) / n * 100.0),
        round_half_up(sum(recalls) / n * 100.0),
        round_half_up(sum(f1s) / n * 100.0),
    )
    return report


def evaluate_clusterings(
    clusterings: list[Clustering], truth: dict[str, str]
) -> EvalReport:
    """Full report from per-block predictions and an IRI->label map."""
    per_block = [(c.block_key, pairwise_counts(c, truth)) for c in clusterings]
    return aggregate(per_block)


def pr_curve_points(
    sweep: list[tuple[float, float, float, float]]
) -> list[tuple[float, float, float, float]]:
    """Threshold-sorted rows (threshold, precision, recall, f1) for plotting."""
    if not sweep:
        raise ConfigError("sweep produced no rows")
    return sorted(sweep, key=lambda row: row[0])
