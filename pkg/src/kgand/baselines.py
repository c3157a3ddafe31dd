"""Rule-based and title-only comparison systems.

The pair scorer sums tiered affinity scores over shared title words,
shared co-authors, venue equality, shared citations and direct
citations between two publications; records whose pair score reaches a
threshold are linked and clusters are the connected components of the
link graph.  The title-only system clusters precomputed title vectors
with the same single-linkage machinery as the main pipeline.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .clustering import Clustering, _UnionFind, _components_to_assignment, cluster_vectors
from .features import TextFeatureTable
from .kg import AuthorRecord, KnowledgeGraph
from .names import ln_fi_key

# Minimal English stopword list for title tokenization.
STOPWORDS = frozenset(
    """a an and are as at be but by for from has have in into is it its of on or
    that the their this to was were which with within without during between
    under over after before above below not no than then so such via using use
    based approach toward towards among about we our can may do does""".split()
)

_TOKEN = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class PairRuleTable:
    """Tier scores for the pair-wise publication comparison rules."""

    title_tiers: tuple[int, int, int] = (3, 5, 8)        # 1 / 2 / >2 shared words
    coauthor_tiers: tuple[int, int, int] = (4, 7, 10)    # 1 / 2 / >2 shared co-authors
    journal_match: int = 6
    citation_tiers: tuple[int, int, int, int, int] = (2, 3, 6, 8, 10)  # 1..4 / >4 shared
    self_citation: int = 10
    threshold: int = 10


DEFAULT_RULES = PairRuleTable()


def title_tokens(title: str) -> set[str]:
    """Lowercase alphanumeric tokens minus stopwords."""
    return {tok for tok in _TOKEN.findall(title.casefold()) if tok not in STOPWORDS}


def _tier(count: int, tiers: tuple[int, ...]) -> int:
    """Score for 1, 2, ..., len(tiers)-1 and the open '>' top tier."""
    if count <= 0:
        return 0
    return tiers[min(count, len(tiers)) - 1]


class PublicationIndex:
    """Per-publication metadata pulled once from the graph."""

    def __init__(self, kg: KnowledgeGraph):
        self.kg = kg
        creator = kg.relations.get("creator")
        part_of = kg.relations.get("partOf")
        cites = kg.relations.get("cites")
        self.authors: dict[int, list[int]] = {}
        self.venue: dict[int, int] = {}
        self.cited: dict[int, set[int]] = {}
        for head, rel, tail in kg.object_triples:
            if rel == creator:
                self.authors.setdefault(head, []).append(tail)
            elif rel == part_of:
                self.venue.setdefault(head, tail)
            elif cites is not None and rel == cites:
                self.cited.setdefault(head, set()).add(tail)
        self.titles = kg.text_lookup("title")
        self.family = kg.text_lookup("familyName")
        self.given = kg.text_lookup("givenName")

    def coauthor_keys(self, publication: int, exclude_key: str | None) -> set[str]:
        keys = set()
        for author in self.authors.get(publication, ()):
            family = self.family.get(author, "")
            if not family:
                continue
            key = ln_fi_key(family, self.given.get(author, ""))
            if exclude_key is None or key != exclude_key:
                keys.add(key)
        return keys


def score_pair(
    pub_a: int,
    pub_b: int,
    kg: KnowledgeGraph | PublicationIndex,
    exclude_key: str | None = None,
    rules: PairRuleTable = DEFAULT_RULES,
) -> int:
    """Summed tier scores for two distinct publications.

    ``exclude_key`` removes the blocked author's own LN-FI key from the
    co-author comparison.  Missing metadata contributes 0 per rule.
    """
    if pub_a == pub_b:
        raise ValueError("pair scoring of a publication with itself is undefined")
    index = kg if isinstance(kg, PublicationIndex) else PublicationIndex(kg)

    score = 0
    shared_words = title_tokens(index.titles.get(pub_a, "")) & title_tokens(index.titles.get(pub_b, ""))
    score += _tier(len(shared_words), rules.title_tiers)

    shared_coauthors = index.coauthor_keys(pub_a, exclude_key) & index.coauthor_keys(pub_b, exclude_key)
    score += _tier(len(shared_coauthors), rules.coauthor_tiers)

    venue_a, venue_b = index.venue.get(pub_a), index.venue.get(pub_b)
    if venue_a is not None and venue_a == venue_b:
        score += rules.journal_match

    shared_cited = index.cited.get(pub_a, set()) & index.cited.get(pub_b, set())
    score += _tier(len(shared_cited), rules.citation_tiers)

    if pub_b in index.cited.get(pub_a, set()) or pub_a in index.cited.get(pub_b, set()):
        score += rules.self_citation
    return score


def score_pairs_cluster(
    records: list[AuthorRecord],
    kg: KnowledgeGraph | PublicationIndex,
    threshold: int = DEFAULT_RULES.threshold,
    rules: PairRuleTable = DEFAULT_RULES,
    block_key: str | None = None,
    strict: bool = False,
) -> Clustering:
    """Link records whose primary publications score at or above the
    threshold (strictly above with ``strict=True``); clusters are the
    connected components of the link graph."""
    index = kg if isinstance(kg, PublicationIndex) else PublicationIndex(kg)
    ordered = sorted(records, key=lambda rec: rec.author_iri)
    if block_key is None and ordered:
        block_key = ln_fi_key(ordered[0].family_name, ordered[0].given_name)
    iris = [rec.author_iri for rec in ordered]
    uf = _UnionFind(len(ordered))
    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            score = score_pair(
                ordered[i].document_entities[0],
                ordered[j].document_entities[0],
                index,
                exclude_key=block_key,
                rules=rules,
            )
            matched = score > threshold if strict else score >= threshold
            if matched:
                uf.union(i, j)
    roots = [uf.find(i) for i in range(len(ordered))]
    return Clustering(
        block_key=block_key or "",
        assignment=_components_to_assignment(roots, iris),
        threshold=float(threshold),
    )


def title_similarity_cluster(
    records: list[AuthorRecord],
    title_vectors: TextFeatureTable,
    threshold: float = 0.18,
    block_key: str | None = None,
) -> Clustering:
    """Single-linkage clustering of primary-document title vectors."""
    ordered = sorted(records, key=lambda rec: rec.author_iri)
    if block_key is None and ordered:
        block_key = ln_fi_key(ordered[0].family_name, ordered[0].given_name)
    iris = [rec.author_iri for rec in ordered]
    vectors = (
        np.stack([title_vectors.lookup(rec.document_entities[0]) for rec in ordered])
        if ordered else np.zeros((0, 1))
    )
    clustering = cluster_vectors(vectors, iris, threshold, block_key=block_key or "")
    return clustering
