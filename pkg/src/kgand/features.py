"""Per-entity literal feature tables.

Text features are dense title vectors, either loaded from a precomputed
vector file or produced by a deterministic hashing embedder for
self-contained runs.  Numeric features are publication years min-max
normalized into [0, 1].  Lookups are total: entities without a literal
resolve to zeros.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TextIO

import numpy as np

from .errors import DimensionError, ParseError
from .kg import IndexMap, KnowledgeGraph

logger = logging.getLogger(__name__)


@dataclass
class TextFeatureTable:
    """Entity index -> dense vector; absent entities map to zeros."""

    dim: int
    vectors: dict[int, np.ndarray] = field(default_factory=dict)

    def lookup(self, entity: int) -> np.ndarray:
        vec = self.vectors.get(entity)
        if vec is None:
            return np.zeros(self.dim)
        return vec

    def matrix(self, num_entities: int) -> np.ndarray:
        """Dense (num_entities, dim) matrix with zero rows for absences."""
        out = np.zeros((num_entities, self.dim))
        for ent, vec in self.vectors.items():
            if 0 <= ent < num_entities:
                out[ent] = vec
        return out


@dataclass
class NumericFeatureTable:
    """Entity index -> year scalar in [0, 1]; absent entities map to 0."""

    values: dict[int, float] = field(default_factory=dict)
    min_year: int = 0
    max_year: int = 0

    def lookup(self, entity: int) -> float:
        return self.values.get(entity, 0.0)

    def array(self, num_entities: int) -> np.ndarray:
        out = np.zeros(num_entities)
        for ent, value in self.values.items():
            if 0 <= ent < num_entities:
                out[ent] = value
        return out


def load_text_vectors(
    source: TextIO | str | Path,
    expected_dim: int,
    entities: IndexMap,
) -> TextFeatureTable:
    """Load a vector file (header ``dim <d>``, rows ``iri<TAB>v1 .. vd``).

    Rows for IRIs that are not in the entity table are skipped with a
    warning; a row of the wrong width raises a DimensionError naming the
    offending entity.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as stream:
            return load_text_vectors(stream, expected_dim, entities)

    header = source.readline().strip()
    parts = header.split()
    if len(parts) != 2 or parts[0] != "dim":
        raise ParseError("vector file must start with a 'dim <d>' header", 1)
    dim = int(parts[1])
    if dim != expected_dim:
        raise DimensionError(f"vector file dimension {dim} != expected {expected_dim}")

    table = TextFeatureTable(dim=dim)
    skipped = 0
    for line_no, raw in enumerate(source, start=2):
        line = raw.rstrip("\n")
        if not line:
            continue
        try:
            iri, values = line.split("\t", 1)
        except ValueError:
            raise ParseError("expected 'iri<TAB>values' row", line_no) from None
        numbers = values.split()
        if len(numbers) != dim:
            raise DimensionError(
                f"entity {iri!r}: row has {len(numbers)} values, expected {dim}"
            )
        ent = entities.get(iri)
        if ent is None:
            skipped += 1
            continue
        table.vectors[ent] = np.array([float(x) for x in numbers])
    if skipped:
        logger.warning("skipped %d vector row(s) for unknown entity IRIs", skipped)
    return table


def fallback_title_embed(title: str, dim: int, seed: int) -> np.ndarray:
    """Deterministic character-trigram hashing embedder.

    Each trigram is hashed (keyed on the seed) to a bucket and a sign;
    the bucket counts are L2-normalized.  Identical strings always give
    identical vectors; the empty string gives the zero vector.
    """
    if dim < 8:
        raise ValueError(f"embedding dim must be >= 8, got {dim}")
    vec = np.zeros(dim)
    if not title:
        return vec
    padded = f"\x02{title}\x03"
    key = seed.to_bytes(8, "little", signed=True)
    for pos in range(max(1, len(padded) - 2)):
        trigram = padded[pos : pos + 3].encode("utf-8")
        digest = hashlib.blake2b(trigram, digest_size=8, key=key).digest()
        value = int.from_bytes(digest, "little")
        bucket = value % dim
        sign = 1.0 if (value >> 32) & 1 else -1.0
        vec[bucket] += sign
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        # pathological sign cancellation; fall back to a single bucket
        vec[0] = 1.0
        norm = 1.0
    return vec / norm


def build_fallback_text_features(kg: KnowledgeGraph, dim: int, seed: int) -> TextFeatureTable:
    """Embed every stored title literal with the hashing embedder."""
    table = TextFeatureTable(dim=dim)
    for ent, title in kg.text_lookup("title").items():
        vec = fallback_title_embed(title, dim, seed)
        if np.any(vec):
            table.vectors[ent] = vec
    return table


def build_numeric_features(kg: KnowledgeGraph) -> NumericFeatureTable:
    """Min-max normalize publication years into [0, 1].

    A degenerate span (all years equal) maps every value to 0.5.
    Entities without a year resolve to 0.0 at lookup time.
    """
    years = kg.year_lookup()
    if not years:
        return NumericFeatureTable()
    lo, hi = min(years.values()), max(years.values())
    table = NumericFeatureTable(min_year=lo, max_year=hi)
    span = hi - lo
    for ent, year in years.items():
        table.values[ent] = 0.5 if span == 0 else (year - lo) / span
    return table
