"""Author blocking, single-linkage clustering and graph deduplication.

An author's clustering feature concatenates their own scoring-time
vector with the mean vector of their linked documents.  Records are
grouped into blocks by the LN-FI key and each block is clustered with
single-linkage agglomerative clustering over cosine distance: clusters
merge while the smallest inter-cluster distance stays strictly below
the threshold, which makes the result equal to the connected components
of the sub-threshold distance graph.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .features import NumericFeatureTable, TextFeatureTable
from .kg import AuthorRecord, KnowledgeGraph
from .model import ModelParams, entity_representation
from .names import full_name_key, has_full_given_name, ln_fi_key

logger = logging.getLogger(__name__)


@dataclass
class AuthorFeature:
    """An author record plus its 2h-dimensional clustering vector."""

    record: AuthorRecord
    vector: np.ndarray


@dataclass
class Block:
    """All features sharing one LN-FI key; blocks partition the records."""

    key: str
    members: list[AuthorFeature] = field(default_factory=list)


@dataclass
class Clustering:
    """Cluster assignment for one block; ids are contiguous from 0."""

    block_key: str
    assignment: dict[str, int]  # author IRI -> cluster id
    threshold: float

    def clusters(self) -> list[list[str]]:
        groups: dict[int, list[str]] = {}
        for iri, cid in self.assignment.items():
            groups.setdefault(cid, []).append(iri)
        return [sorted(groups[cid]) for cid in sorted(groups)]


def build_author_feature(
    model: ModelParams,
    record: AuthorRecord,
    text: TextFeatureTable | None = None,
    numeric: NumericFeatureTable | None = None,
    fused: bool = True,
) -> AuthorFeature:
    """Concatenate the author vector with the mean document vector.

    ``fused=False`` switches to the raw embedding rows, bypassing
    literal fusion for multimodal models.
    """
    if not record.document_entities:
        raise ValueError(f"record {record.author_iri} has no documents")

    def rep(entity: int) -> np.ndarray:
        if fused:
            return entity_representation(model, entity, text, numeric)
        return model.entity_emb[entity]

    author_vec = rep(record.author_entity)
    doc_vecs = np.stack([rep(doc) for doc in record.document_entities])
    return AuthorFeature(record=record, vector=np.concatenate([author_vec, doc_vecs.mean(axis=0)]))


def build_blocks(
    records: list[AuthorRecord],
    model: ModelParams,
    text: TextFeatureTable | None = None,
    numeric: NumericFeatureTable | None = None,
    fused: bool = True,
) -> list[Block]:
    """Group author features by LN-FI key, members ordered by author IRI."""
    grouped: dict[str, list[AuthorRecord]] = {}
    for record in records:
        grouped.setdefault(ln_fi_key(record.family_name, record.given_name), []).append(record)
    blocks = []
    for key in sorted(grouped):
        members = sorted(grouped[key], key=lambda rec: rec.author_iri)
        blocks.append(
            Block(key=key, members=[build_author_feature(model, rec, text, numeric, fused) for rec in members])
        )
    return blocks


def cosine_distance_matrix(vectors: np.ndarray) -> np.ndarray:
    """Pairwise 1 - cosine similarity; rows with zero norm sit at distance 1."""
    norms = np.linalg.norm(vectors, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = vectors / safe[:, None]
    sims = np.clip(unit @ unit.T, -1.0, 1.0)
    dist = 1.0 - sims
    zero = norms == 0.0
    dist[zero, :] = 1.0
    dist[:, zero] = 1.0
    np.fill_diagonal(dist, 0.0)
    return dist


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _components_to_assignment(roots: list[int], iris: list[str]) -> dict[str, int]:
    next_id = 0
    root_to_id: dict[int, int] = {}
    assignment = {}
    for iri, root in zip(iris, roots):
        if root not in root_to_id:
            root_to_id[root] = next_id
            next_id += 1
        assignment[iri] = root_to_id[root]
    return assignment


def cluster_vectors(
    vectors: np.ndarray, iris: list[str], threshold: float, block_key: str = ""
) -> Clustering:
    """Single-linkage clustering at a cosine-distance threshold.

    Pairs strictly below the threshold connect; clusters are the
    connected components, which coincides with agglomerative
    single-linkage merging stopped at the threshold.
    """
    if not 0.0 <= threshold <= 2.0:
        raise ConfigError(f"cosine-distance threshold must be in [0, 2], got {threshold}")
    n = len(iris)
    if n == 0:
        return Clustering(block_key=block_key, assignment={}, threshold=threshold)
    if n == 1:
        return Clustering(block_key=block_key, assignment={iris[0]: 0}, threshold=threshold)
    dist = cosine_distance_matrix(np.asarray(vectors, dtype=float))
    uf = _UnionFind(n)
    for i, j in zip(*np.nonzero(np.triu(dist < threshold, k=1))):
        uf.union(int(i), int(j))
    roots = [uf.find(i) for i in range(n)]
    return Clustering(block_key=block_key, assignment=_components_to_assignment(roots, iris), threshold=threshold)


def cluster_block(block: Block, threshold: float) -> Clustering:
    vectors = np.stack([m.vector for m in block.members]) if block.members else np.zeros((0, 1))
    iris = [m.record.author_iri for m in block.members]
    return cluster_vectors(vectors, iris, threshold, block_key=block.key)


def threshold_sweep(
    blocks: list[Block], grid: list[float], truth: dict[str, str] | None = None
) -> list[tuple[float, float, float, float]]:
    """Micro pairwise metrics at every grid threshold.

    Truth labels default to the records' own ORCID labels.  Recall is
    non-decreasing in the threshold because single-linkage merges nest.
    """
    from .evaluation import aggregate, pairwise_counts, prf_exact

    if not grid:
        raise ConfigError("threshold grid is empty")
    labels = truth or {
        m.record.author_iri: m.record.orcid
        for block in blocks for m in block.members if m.record.orcid
    }
    rows = []
    for threshold in grid:
        counts = [pairwise_counts(cluster_block(b, threshold), labels) for b in blocks]
        micro = prf_exact(aggregate_counts(counts))
        rows.append((float(threshold), micro[0] * 100.0, micro[1] * 100.0, micro[2] * 100.0))
    return rows


def aggregate_counts(counts):
    from .evaluation import PairCounts

    total = PairCounts()
    for c in counts:
        total.tp += c.tp
        total.fp += c.fp
        total.fn += c.fn
        total.tn += c.tn
    return total


def post_block_filter(clustering: Clustering, members: list[AuthorFeature]) -> Clustering:
    """Split clusters so merged records share an identical full name.

    Records lacking a full given name stay attached to the fragment that
    contains their nearest neighbor (cosine distance) within their
    original cluster; with no fully-named companions they stay together.
    """
    by_iri = {m.record.author_iri: m for m in members}
    new_assignment: dict[str, int] = {}
    next_id = 0
    for cluster in clustering.clusters():
        fragments: dict[str, list[str]] = {}
        incomplete: list[str] = []
        for iri in cluster:
            rec = by_iri[iri].record
            if has_full_given_name(rec.given_name):
                fragments.setdefault(full_name_key(rec.family_name, rec.given_name), []).append(iri)
            else:
                incomplete.append(iri)
        if not fragments:
            for iri in incomplete:
                new_assignment[iri] = next_id
            if incomplete:
                next_id += 1
            continue
        fragment_ids: dict[str, int] = {}
        for name in sorted(fragments):
            fragment_ids[name] = next_id
            for iri in fragments[name]:
                new_assignment[iri] = next_id
            next_id += 1
        for iri in incomplete:
            vec = by_iri[iri].vector
            best_name, best_dist = None, np.inf
            for name, iris in fragments.items():
                for other in iris:
                    d = _cosine_distance_pair(vec, by_iri[other].vector)
                    if d < best_dist:
                        best_dist, best_name = d, name
            new_assignment[iri] = fragment_ids[best_name]
    return Clustering(
        block_key=clustering.block_key, assignment=new_assignment, threshold=clustering.threshold
    )


def _cosine_distance_pair(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 1.0
    return float(1.0 - np.clip(a @ b / (na * nb), -1.0, 1.0))


def dedupe_kg(
    kg: KnowledgeGraph, clusterings: list[Clustering]
) -> tuple[KnowledgeGraph, dict[str, str]]:
    """Merge each cluster into its lexicographically smallest author IRI.

    Object edges are re-pointed to canonical entities and deduplicated
    (self-loops from merged co-author links are dropped); literals of
    absorbed authors are discarded in favor of the canonical record.
    Returns the rewritten graph and the old->canonical merge map.
    """
    merge_map: dict[str, str] = {}
    seen: set[str] = set()
    for clustering in clusterings:
        for iris in clustering.clusters():
            overlap = seen.intersection(iris)
            if overlap:
                raise ValueError(f"entities clustered in more than one block: {sorted(overlap)[:3]}")
            seen.update(iris)
            canonical = min(iris)
            for iri in iris:
                merge_map[iri] = canonical

    removed = {iri for iri, canon in merge_map.items() if iri != canon}
    out = KnowledgeGraph(schema=kg.schema)
    for rel in kg.relations:
        out.relations.add(rel)

    def canon_iri(entity: int) -> str:
        iri = kg.entities.name(entity)
        return merge_map.get(iri, iri)

    seen_objects: set[tuple[int, int, int]] = set()
    for head, rel, tail in kg.object_triples:
        head_iri, tail_iri = canon_iri(head), canon_iri(tail)
        if head_iri == tail_iri and kg.relations.name(rel) == "knows":
            continue  # merged co-author self-link
        triple = (out.entities.add(head_iri), rel, out.entities.add(tail_iri))
        if triple not in seen_objects:
            seen_objects.add(triple)
            out.object_triples.append(triple)
    for ent, attr, value in kg.text_triples:
        iri = kg.entities.name(ent)
        if iri in removed:
            continue
        out.text_triples.append((out.entities.add(iri), attr, value))
    for ent, attr, year in kg.numeric_triples:
        iri = kg.entities.name(ent)
        if iri in removed:
            continue
        out.numeric_triples.append((out.entities.add(iri), attr, year))
    logger.info("merged %d author entities into %d canonical ones",
                len(merge_map), len(merge_map) - len(removed))
    return out, merge_map
