"""Batch export of title vectors in the pipeline's vector file format.

Input: CSV rows ``entity_iri,title`` (an ``entity_iri,title`` header row
is skipped when present).  Output: a UTF-8 text file starting with a
``dim <d>`` header followed by one ``iri<TAB>v1 .. vd`` row per input
title, in input order.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import DEFAULT_MODEL, TRANSFORMER_DIM, make_encoder


@dataclass
class ExportJob:
    input_csv: str | Path
    output_path: str | Path
    model_id: str = DEFAULT_MODEL
    batch_size: int = 32
    dim: int = TRANSFORMER_DIM  # used by the hash encoder only
    seed: int = 0


def read_title_csv(path: str | Path) -> list[tuple[str, str]]:
    rows: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8", newline="") as stream:
        reader = csv.reader(stream)
        for i, row in enumerate(reader):
            if not row:
                continue
            if i == 0 and [c.strip() for c in row[:2]] == ["entity_iri", "title"]:
                continue
            if len(row) < 2:
                raise ValueError(f"{path}: row {i + 1} needs two columns (entity_iri, title)")
            rows.append((row[0].strip(), row[1]))
    return rows


def export_vectors(job: ExportJob) -> Path:
    """Encode every input title and write the vector file atomically."""
    rows = read_title_csv(job.input_csv)
    encoder = make_encoder(job.model_id, dim=job.dim, seed=job.seed)

    out = Path(job.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out.parent, prefix=f".{out.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as stream:
            stream.write(f"dim {encoder.dim}\n")
            for start in range(0, len(rows), job.batch_size):
                batch = rows[start : start + job.batch_size]
                vectors = encoder.encode([title for _, title in batch])
                for (iri, _), vec in zip(batch, np.asarray(vectors)):
                    stream.write(iri + "\t" + " ".join(f"{v:.8f}" for v in vec) + "\n")
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return out
