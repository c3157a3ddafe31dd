"""Delimited report files and the matplotlib figures rendered beside them."""

from __future__ import annotations

import csv
import os
import tempfile
from pathlib import Path
from typing import Callable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .clustering import Clustering
from .errors import ParseError
from .evaluation import EvalReport, PairCounts


def atomic_write(path: str | Path, write: Callable) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as stream:
            write(stream)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_clustering_csv(clusterings: list[Clustering], path: str | Path) -> None:
    """Rows ``author_iri,block_key,cluster_id``."""

    def emit(stream):
        writer = csv.writer(stream)
        writer.writerow(["author_iri", "block_key", "cluster_id"])
        for clustering in clusterings:
            for iri in sorted(clustering.assignment):
                writer.writerow([iri, clustering.block_key, clustering.assignment[iri]])

    atomic_write(path, emit)


def read_clustering_csv(path: str | Path) -> list[Clustering]:
    grouped: dict[str, dict[str, int]] = {}
    with open(path, "r", encoding="utf-8", newline="") as stream:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["author_iri", "block_key", "cluster_id"]:
            raise ParseError("clustering file must start with header 'author_iri,block_key,cluster_id'", 1)
        for row in reader:
            if len(row) < 3:
                continue
            grouped.setdefault(row[1], {})[row[0]] = int(row[2])
    return [
        Clustering(block_key=key, assignment=assignment, threshold=float("nan"))
        for key, assignment in sorted(grouped.items())
    ]


def write_sweep_csv(rows: list[tuple[float, float, float, float]], path: str | Path) -> None:
    """Rows ``threshold,precision,recall,f1`` sorted by threshold."""

    def emit(stream):
        writer = csv.writer(stream)
        writer.writerow(["threshold", "precision", "recall", "f1"])
        for threshold, precision, recall, f1 in sorted(rows, key=lambda r: r[0]):
            writer.writerow([f"{threshold:g}", f"{precision:.2f}", f"{recall:.2f}", f"{f1:.2f}"])

    atomic_write(path, emit)


def write_confusion_csv(counts: PairCounts, path: str | Path) -> None:
    """2x2 pair confusion matrix with row/column totals."""

    def emit(stream):
        writer = csv.writer(stream)
        writer.writerow(["", "positive_label", "negative_label", "total"])
        writer.writerow(["positive_classification", counts.tp, counts.fp, counts.tp + counts.fp])
        writer.writerow(["negative_classification", counts.fn, counts.tn, counts.fn + counts.tn])
        writer.writerow(["total", counts.tp + counts.fn, counts.fp + counts.tn, counts.total])

    atomic_write(path, emit)


def write_eval_report(report: EvalReport, path: str | Path, title: str = "clustering evaluation") -> None:
    """Human-readable per-block table plus micro/macro summary."""

    def emit(stream):
        stream.write(f"# {title}\n\n")
        stream.write(f"{'block':<24} {'tp':>6} {'fp':>6} {'fn':>6} {'tn':>6} {'P':>8} {'R':>8} {'F1':>8}\n")
        for block in report.per_block:
            c = block.counts
            stream.write(
                f"{block.block_key:<24} {c.tp:>6} {c.fp:>6} {c.fn:>6} {c.tn:>6}"
                f" {block.precision:>8.2f} {block.recall:>8.2f} {block.f1:>8.2f}\n"
            )
        stream.write("\n")
        mc = report.micro_counts
        stream.write(f"pairs total={mc.total} tp={mc.tp} fp={mc.fp} fn={mc.fn} tn={mc.tn}\n")
        stream.write(
            f"micro  P={report.micro[0]:.2f} R={report.micro[1]:.2f} F1={report.micro[2]:.2f}\n"
        )
        stream.write(
            f"macro  P={report.macro[0]:.2f} R={report.macro[1]:.2f} F1={report.macro[2]:.2f}\n"
        )

    atomic_write(path, emit)


def plot_pr_curves(rows: list[tuple[float, float, float, float]], path: str | Path) -> None:
    """Precision and recall versus clustering threshold."""
    ordered = sorted(rows, key=lambda r: r[0])
    thresholds = [r[0] for r in ordered]
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(thresholds, [r[1] for r in ordered], marker="o", markersize=3, label="precision")
    ax.plot(thresholds, [r[2] for r in ordered], marker="s", markersize=3, label="recall")
    ax.plot(thresholds, [r[3] for r in ordered], linestyle="--", linewidth=1, label="f1")
    ax.set_xlabel("distance threshold")
    ax.set_ylabel("percent")
    ax.set_ylim(-2, 102)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_block_metrics(report: EvalReport, path: str | Path) -> None:
    """Histogram of per-block F1 scores."""
    f1s = [block.f1 for block in report.per_block]
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.hist(f1s, bins=20, range=(0, 100), edgecolor="black", linewidth=0.5)
    ax.set_xlabel("per-block F1")
    ax.set_ylabel("blocks")
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_training_log(history, path: str | Path) -> None:
    """Epoch loss lines plus tab-separated evaluation lines."""

    def emit(stream):
        evals = {epoch: metrics for epoch, metrics in history.evals}
        for epoch, loss in enumerate(history.losses, start=1):
            stream.write(f"{epoch}\t{loss:.6f}\n")
            if epoch in evals:
                m = evals[epoch]
                stream.write(
                    f"eval\t{epoch}\t{m.mrr:.6f}\t{m.hits1:.6f}\t{m.hits3:.6f}\t{m.hits10:.6f}\n"
                )

    atomic_write(path, emit)


def write_merge_map_csv(merge_map: dict[str, str], path: str | Path) -> None:
    def emit(stream):
        writer = csv.writer(stream)
        writer.writerow(["old_iri", "canonical_iri"])
        for old in sorted(merge_map):
            writer.writerow([old, merge_map[old]])

    atomic_write(path, emit)
