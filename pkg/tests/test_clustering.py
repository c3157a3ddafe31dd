"""Blocking keys, features, single-linkage clustering and deduplication."""

import io

import numpy as np
import pytest

from kgand.clustering import (
    AuthorFeature,
    Block,
    build_author_feature,
    build_blocks,
    cluster_block,
    cluster_vectors,
    cosine_distance_matrix,
    dedupe_kg,
    post_block_filter,
    threshold_sweep,
)
from kgand.errors import ConfigError
from kgand.kg import AuthorRecord, extract_author_records, parse_triples
from kgand.model import entity_representation, init_params
from kgand.names import ln_fi_key


class TestLnFiKey:
    def test_examples(self):
        assert ln_fi_key("Liu", "Wei") == "liu_w"
        assert ln_fi_key("Cabanac", "Guillaume") == "cabanac_g"
        assert ln_fi_key("Müller", "Jörg") == "muller_j"

    def test_punctuation_and_case(self):
        assert ln_fi_key("O'Brien", "Séan") == "obrien_s"
        assert ln_fi_key("VAN DER BERG", "  J. P.") == "vanderberg_j"
        assert ln_fi_key("van der Berg", "J.") == "vanderberg_j"

    def test_empty_given_name_empty_suffix(self):
        assert ln_fi_key("Liu", "") == "liu_"

    def test_empty_family_rejected(self):
        with pytest.raises(ValueError):
            ln_fi_key("", "Wei")


def record(iri, family="Liu", given="Wei", entity=0, docs=(1,), orcid=None):
    return AuthorRecord(
        author_entity=entity,
        author_iri=iri,
        family_name=family,
        given_name=given,
        document_entities=list(docs),
        orcid=orcid,
    )


class TestBuildAuthorFeature:
    def setup_method(self):
        self.model = init_params("unimodal", 6, 2, 4, seed=0)

    def test_feature_length_is_twice_dim(self):
        feat = build_author_feature(self.model, record("a/1", entity=0, docs=(1,)))
        assert feat.vector.shape == (8,)

    def test_single_document_uses_its_representation(self):
        feat = build_author_feature(self.model, record("a/1", entity=0, docs=(2,)))
        np.testing.assert_array_equal(feat.vector[4:], self.model.entity_emb[2])

    def test_two_documents_average(self):
        feat = build_author_feature(self.model, record("a/1", entity=0, docs=(1, 3)))
        # scalar oracle: coordinate-wise average of the two rows
        expected = [
            (self.model.entity_emb[1][i] + self.model.entity_emb[3][i]) / 2.0
            for i in range(4)
        ]
        np.testing.assert_allclose(feat.vector[4:], expected, rtol=1e-15)

    def test_no_documents_rejected(self):
        with pytest.raises(ValueError):
            build_author_feature(self.model, record("a/1", docs=()))

    def test_raw_switch_bypasses_fusion(self):
        model = init_params("glin", 6, 2, 4, literal_dim=2, seed=1)
        rec = record("a/1", entity=0, docs=(1,))
        raw = build_author_feature(model, rec, fused=False)
        np.testing.assert_array_equal(raw.vector[:4], model.entity_emb[0])
        fused = build_author_feature(model, rec, fused=True)
        np.testing.assert_allclose(fused.vector[:4], entity_representation(model, 0))


class TestBuildBlocks:
    def test_grouping_and_order(self):
        model = init_params("unimodal", 8, 2, 4, seed=0)
        records = [
            record("a/3", "Liu", "Wei", 3),
            record("a/1", "Liu", "Wen", 1),
            record("a/2", "Park", "Hee", 2),
        ]
        blocks = build_blocks(records, model)
        assert [b.key for b in blocks] == ["liu_w", "park_h"]
        assert [m.record.author_iri for m in blocks[0].members] == ["a/1", "a/3"]

    def test_blocks_partition_records(self):
        model = init_params("unimodal", 30, 2, 4, seed=0)
        rng = np.random.default_rng(0)
        families = ["Liu", "Park", "Kim", "Wang"]
        records = [
            record(f"a/{i}", families[rng.integers(4)], "AZ"[rng.integers(2)], i, (i,))
            for i in range(20)
        ]
        blocks = build_blocks(records, model)
        seen = [m.record.author_iri for b in blocks for m in b.members]
        assert sorted(seen) == sorted(r.author_iri for r in records)
        for block in blocks:
            for member in block.members:
                assert ln_fi_key(member.record.family_name, member.record.given_name) == block.key

    def test_distinct_keys_make_singletons(self):
        model = init_params("unimodal", 8, 2, 4, seed=0)
        records = [record(f"a/{i}", fam, "X", i) for i, fam in enumerate(["Liu", "Park", "Kim"])]
        blocks = build_blocks(records, model)
        assert all(len(b.members) == 1 for b in blocks)


def naive_single_linkage(dist, threshold):
    """Textbook agglomerative single linkage: repeatedly merge the pair of
    clusters with the smallest minimum member distance while it stays
    strictly below the threshold."""
    clusters = [{i} for i in range(dist.shape[0])]
    while len(clusters) > 1:
        best = (np.inf, None, None)
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                d = min(dist[i, j] for i in clusters[a] for j in clusters[b])
                if d < best[0]:
                    best = (d, a, b)
        if best[0] >= threshold:
            break
        _, a, b = best
        clusters[a] |= clusters[b]
        del clusters[b]
    labels = np.empty(dist.shape[0], dtype=int)
    for cid, members in enumerate(clusters):
        for i in members:
            labels[i] = cid
    return labels


def components_of_subthreshold_graph(dist, threshold):
    """Second oracle: BFS connected components over edges below threshold."""
    n = dist.shape[0]
    labels = -np.ones(n, dtype=int)
    current = 0
    for start in range(n):
        if labels[start] >= 0:
            continue
        queue = [start]
        labels[start] = current
        while queue:
            node = queue.pop()
            for other in range(n):
                if labels[other] < 0 and dist[node, other] < threshold:
                    labels[other] = current
                    queue.append(other)
        current += 1
    return labels


def as_partition(labels, iris):
    groups = {}
    for iri, label in zip(iris, labels):
        groups.setdefault(label, set()).add(iri)
    return frozenset(frozenset(g) for g in groups.values())


class TestClusterBlock:
    def block_from_vectors(self, vectors):
        members = [
            AuthorFeature(record(f"a/{i}", entity=i, docs=(i,)), np.asarray(v, dtype=float))
            for i, v in enumerate(vectors)
        ]
        return Block(key="liu_w", members=members)

    def planted_distance_points(self):
        # unit vectors at angles giving d(a,b)=0.1, d(b,c)=0.5, d(a,c)=0.7
        angle_ab = np.arccos(1 - 0.1)
        angle_ac = np.arccos(1 - 0.7)
        return [
            [1.0, 0.0],
            [np.cos(angle_ab), np.sin(angle_ab)],
            [np.cos(angle_ac), np.sin(angle_ac)],
        ]

    def test_three_point_merge_below_threshold(self):
        points = self.planted_distance_points()
        dist = cosine_distance_matrix(np.array(points))
        assert dist[0, 1] == pytest.approx(0.1)
        assert dist[0, 2] == pytest.approx(0.7)
        clustering = cluster_block(self.block_from_vectors(points), 0.3)
        expected = naive_single_linkage(dist, 0.3)
        assert as_partition(expected, ["a/0", "a/1", "a/2"]) == frozenset(
            {frozenset({"a/0", "a/1"}), frozenset({"a/2"})}
        )
        got = [clustering.assignment[f"a/{i}"] for i in range(3)]
        assert as_partition(got, ["a/0", "a/1", "a/2"]) == as_partition(
            expected, ["a/0", "a/1", "a/2"]
        )

    def test_three_point_chaining(self):
        points = self.planted_distance_points()
        clustering = cluster_block(self.block_from_vectors(points), 0.6)
        # d(b,c) = 0.5 < 0.6 chains all three together
        assert len(set(clustering.assignment.values())) == 1

    def test_singleton_block(self):
        clustering = cluster_block(self.block_from_vectors([[1.0, 0.0]]), 0.0)
        assert clustering.assignment == {"a/0": 0}

    def test_matches_both_oracles_on_random_instances(self):
        rng = np.random.default_rng(42)
        for trial in range(50):
            n = int(rng.integers(2, 201))
            dim = int(rng.integers(2, 6))
            vectors = rng.normal(size=(n, dim))
            # sprinkle duplicates and zero vectors
            if n > 4:
                vectors[1] = vectors[0]
                if trial % 3 == 0:
                    vectors[2] = 0.0
            threshold = float(rng.uniform(0.0, 1.2))
            iris = [f"a/{i}" for i in range(n)]
            got = cluster_vectors(vectors, iris, threshold)
            labels = [got.assignment[iri] for iri in iris]
            dist = cosine_distance_matrix(vectors)
            hac = naive_single_linkage(dist, threshold)
            comp = components_of_subthreshold_graph(dist, threshold)
            assert as_partition(labels, iris) == as_partition(hac, iris)
            assert as_partition(labels, iris) == as_partition(comp, iris)

    def test_cluster_ids_contiguous_from_zero(self):
        rng = np.random.default_rng(7)
        vectors = rng.normal(size=(40, 3))
        clustering = cluster_vectors(vectors, [f"a/{i}" for i in range(40)], 0.2)
        ids = sorted(set(clustering.assignment.values()))
        assert ids == list(range(len(ids)))

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        vectors = rng.normal(size=(30, 4))
        iris = [f"a/{i}" for i in range(30)]
        base = cluster_vectors(vectors, iris, 0.35)
        for scale in (1e-6, 0.5, 7.0, 1e6):
            scaled = cluster_vectors(vectors * scale, iris, 0.35)
            assert scaled.assignment == base.assignment

    def test_zero_vector_at_distance_one(self):
        vectors = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.01]])
        iris = ["a/0", "a/1", "a/2"]
        below_one = cluster_vectors(vectors, iris, 0.9)
        assert below_one.assignment["a/0"] not in (
            below_one.assignment["a/1"], below_one.assignment["a/2"])
        above_one = cluster_vectors(vectors, iris, 1.01)
        assert len(set(above_one.assignment.values())) == 1

    def test_threshold_bounds(self):
        with pytest.raises(ConfigError):
            cluster_vectors(np.ones((2, 2)), ["a", "b"], -0.1)
        with pytest.raises(ConfigError):
            cluster_vectors(np.ones((2, 2)), ["a", "b"], 2.5)


class TestThresholdSweep:
    def make_blocks(self):
        rng = np.random.default_rng(5)
        blocks = []
        for b in range(3):
            members = []
            for author in range(3):
                center = rng.normal(size=6)
                for copy in range(2):
                    vec = center + rng.normal(scale=0.05, size=6)
                    rec = record(
                        f"a/{b}/{author}/{copy}", f"Fam{b}", "X",
                        orcid=f"id-{b}-{author}",
                    )
                    members.append(AuthorFeature(rec, vec))
            blocks.append(Block(key=f"fam{b}_x", members=members))
        return blocks

    def test_recall_monotone_in_threshold(self):
        blocks = self.make_blocks()
        grid = [0.0, 0.1, 0.3, 0.6, 1.0, 1.5, 2.0]
        rows = threshold_sweep(blocks, grid)
        recalls = [row[2] for row in rows]
        assert all(a <= b + 1e-9 for a, b in zip(recalls, recalls[1:]))

    def test_degenerate_thresholds(self):
        blocks = self.make_blocks()
        rows = threshold_sweep(blocks, [0.0, 2.0])
        # all singletons at 0: no predicted pairs
        assert rows[0][2] == 0.0
        # single cluster per block at 2: every true pair recovered
        assert rows[1][2] == 100.0

    def test_empty_grid_rejected(self):
        with pytest.raises(ConfigError):
            threshold_sweep(self.make_blocks(), [])


class TestPostBlockFilter:
    def feature(self, iri, family, given, vec):
        return AuthorFeature(record(iri, family, given), np.asarray(vec, dtype=float))

    def test_unequal_full_names_split(self):
        members = [
            self.feature("a/1", "Liu", "Wei", [1, 0]),
            self.feature("a/2", "Liu", "Wen", [1, 0.01]),
        ]
        clustering = cluster_vectors(np.stack([m.vector for m in members]),
                                     ["a/1", "a/2"], 0.5, "liu_w")
        assert len(set(clustering.assignment.values())) == 1
        filtered = post_block_filter(clustering, members)
        assert filtered.assignment["a/1"] != filtered.assignment["a/2"]

    def test_identical_full_names_untouched(self):
        members = [
            self.feature("a/1", "Liu", "Wei", [1, 0]),
            self.feature("a/2", "Liu", "wei", [1, 0.01]),
            self.feature("a/3", "LIU", "Wei", [0.99, 0.02]),
        ]
        clustering = cluster_vectors(np.stack([m.vector for m in members]),
                                     ["a/1", "a/2", "a/3"], 0.5, "liu_w")
        filtered = post_block_filter(clustering, members)
        assert len(set(filtered.assignment.values())) == 1

    def test_mixed_cluster_two_full_names(self):
        # enumeration oracle: grouping 3 records by full name gives 2 groups
        members = [
            self.feature("a/1", "Liu", "Wei", [1, 0]),
            self.feature("a/2", "Liu", "Wei", [1, 0.01]),
            self.feature("a/3", "Liu", "Wen", [0.99, 0.02]),
        ]
        names = {("liu wei"), ("liu wen")}
        assert len(names) == 2
        clustering = cluster_vectors(np.stack([m.vector for m in members]),
                                     ["a/1", "a/2", "a/3"], 0.5, "liu_w")
        filtered = post_block_filter(clustering, members)
        assert len(set(filtered.assignment.values())) == 2
        assert filtered.assignment["a/1"] == filtered.assignment["a/2"]

    def test_initial_only_record_follows_nearest_neighbor(self):
        members = [
            self.feature("a/1", "Liu", "Wei", [1, 0, 0]),
            self.feature("a/2", "Liu", "Wen", [0, 1, 0]),
            self.feature("a/3", "Liu", "W", [0.1, 0.99, 0]),  # nearest to a/2
        ]
        clustering = cluster_vectors(np.stack([m.vector for m in members]),
                                     ["a/1", "a/2", "a/3"], 2.0, "liu_w")
        filtered = post_block_filter(clustering, members)
        assert filtered.assignment["a/3"] == filtered.assignment["a/2"]
        assert filtered.assignment["a/1"] != filtered.assignment["a/2"]

    def test_cluster_of_initial_only_records_stays_together(self):
        members = [
            self.feature("a/1", "Liu", "W", [1, 0]),
            self.feature("a/2", "Liu", "", [1, 0.01]),
        ]
        clustering = cluster_vectors(np.stack([m.vector for m in members]),
                                     ["a/1", "a/2"], 0.5, "liu_")
        filtered = post_block_filter(clustering, members)
        assert len(set(filtered.assignment.values())) == 1


DEDUPE_KG = """\
pub/1\tcreator\tauthor/a\tiri
pub/2\tcreator\tauthor/b\tiri
pub/3\tcreator\tauthor/c\tiri
pub/4\tcreator\tauthor/d\tiri
author/a\tknows\tauthor/b\tiri
author/b\tknows\tauthor/a\tiri
pub/1\tpartOf\tvenue/1\tiri
pub/2\tpartOf\tvenue/1\tiri
author/a\tfamilyName\tLiu\ttext
author/a\tgivenName\tWei\ttext
author/b\tfamilyName\tLiu\ttext
author/b\tgivenName\tWei\ttext
author/c\tfamilyName\tLiu\ttext
author/c\tgivenName\tWei\ttext
author/d\tfamilyName\tPark\ttext
author/d\tgivenName\tHee\ttext
pub/1\tyear\t2001\tyear
"""


class TestDedupeKg:
    def make(self):
        return parse_triples(io.StringIO(DEDUPE_KG))

    def clustering_for(self, kg, groups):
        from kgand.clustering import Clustering

        assignment = {}
        for cid, iris in enumerate(groups):
            for iri in iris:
                assignment[iri] = cid
        return Clustering(block_key="liu_w", assignment=assignment, threshold=0.5)

    def test_merge_of_three_drops_two_entities(self):
        kg = self.make()
        before = kg.num_entities
        merged, merge_map = dedupe_kg(
            kg, [self.clustering_for(kg, [["author/a", "author/b", "author/c"]])]
        )
        assert merged.num_entities == before - 2
        assert merge_map["author/b"] == "author/a"
        assert merge_map["author/c"] == "author/a"
        # publication and venue counts untouched
        for iri in ("pub/1", "pub/2", "pub/3", "pub/4", "venue/1"):
            assert iri in merged.entities

    def test_all_singletons_is_identity(self):
        kg = self.make()
        groups = [["author/a"], ["author/b"], ["author/c"]]
        merged, _ = dedupe_kg(kg, [self.clustering_for(kg, groups)])
        assert merged.num_entities == kg.num_entities
        assert sorted(merged.entities.names()) == sorted(kg.entities.names())
        a = {tuple(sorted([merged.entities.name(h), merged.entities.name(t)])) + (merged.relations.name(r),)
             for h, r, t in merged.object_triples}
        b = {tuple(sorted([kg.entities.name(h), kg.entities.name(t)])) + (kg.relations.name(r),)
             for h, r, t in kg.object_triples}
        assert a == b

    def test_creator_edges_repointed_and_kept_distinct(self):
        kg = self.make()
        merged, _ = dedupe_kg(
            kg, [self.clustering_for(kg, [["author/a", "author/b", "author/c"]])]
        )
        creator = merged.relations.index("creator")
        creator_edges = {
            (merged.entities.name(h), merged.entities.name(t))
            for h, r, t in merged.object_triples if r == creator
        }
        assert creator_edges == {
            ("pub/1", "author/a"), ("pub/2", "author/a"),
            ("pub/3", "author/a"), ("pub/4", "author/d"),
        }

    def test_self_knows_loops_dropped(self):
        kg = self.make()
        merged, _ = dedupe_kg(kg, [self.clustering_for(kg, [["author/a", "author/b"]])])
        knows = merged.relations.index("knows")
        loops = [(h, t) for h, r, t in merged.object_triples if r == knows and h == t]
        assert loops == []

    def test_cluster_spanning_blocks_rejected(self):
        from kgand.clustering import Clustering

        kg = self.make()
        first = Clustering("liu_w", {"author/a": 0, "author/b": 0}, 0.5)
        second = Clustering("liu_x", {"author/b": 0, "author/c": 0}, 0.5)
        with pytest.raises(ValueError):
            dedupe_kg(kg, [first, second])

    def test_extraction_after_dedupe(self):
        kg = self.make()
        merged, _ = dedupe_kg(
            kg, [self.clustering_for(kg, [["author/a", "author/b", "author/c"]])]
        )
        records = extract_author_records(merged)
        liu = [rec for rec in records if rec.family_name == "Liu"]
        assert len(liu) == 1
        assert len(liu[0].document_entities) == 3
