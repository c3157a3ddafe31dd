"""Negative sampling, loss, Adam, gradients and the training loop."""

import io
import math

import numpy as np
import pytest

from kgand.errors import ConfigError, TrainingError
from kgand.features import NumericFeatureTable, TextFeatureTable
from kgand.kg import parse_triples, split_structural
from kgand.model import init_params
from kgand.training import (
    AdamState,
    TrainConfig,
    adam_step,
    eval_link_prediction,
    forward_backward,
    forward_loss,
    sample_negatives,
    smoothed_bce,
    train_model,
)


class TestSampleNegatives:
    positives = np.array([[0, 0, 1], [2, 1, 3], [4, 0, 5]])

    def test_count_per_positive(self):
        out = sample_negatives(self.positives, 12, 10, np.random.default_rng(0))
        assert out.shape == (36, 3)

    def test_exactly_one_slot_differs(self):
        rng = np.random.default_rng(1)
        out = sample_negatives(self.positives, 7, 10, rng)
        for row, pos in zip(out, np.repeat(self.positives, 7, axis=0)):
            diffs = [row[0] != pos[0], row[1] != pos[1], row[2] != pos[2]]
            assert diffs[1] is np.False_  # relation never corrupted
            assert sum(diffs) == 1

    def test_no_collision_with_original(self):
        rng = np.random.default_rng(2)
        out = sample_negatives(np.array([[0, 0, 1]] * 200), 5, 2, rng)
        for row in out:
            assert tuple(row) != (0, 0, 1)

    def test_deterministic_for_fixed_seed(self):
        a = sample_negatives(self.positives, 9, 50, np.random.default_rng(3))
        b = sample_negatives(self.positives, 9, 50, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_too_few_entities(self):
        with pytest.raises(ConfigError):
            sample_negatives(self.positives, 2, 1, np.random.default_rng(0))

    def test_replacement_is_near_uniform(self):
        rng = np.random.default_rng(4)
        out = sample_negatives(np.array([[0, 0, 1]] * 3000), 4, 6, rng)
        corrupted_heads = out[out[:, 0] != 0][:, 0]
        values, counts = np.unique(corrupted_heads, return_counts=True)
        assert set(values.tolist()) == {1, 2, 3, 4, 5}
        assert counts.min() > 0.7 * counts.max()


class TestSmoothedBce:
    def test_zero_score_gives_ln2_any_smoothing(self):
        for eps in (0.0, 0.001, 0.3):
            loss, _ = smoothed_bce(np.array([0.0]), np.array([True]), eps)
            assert loss == pytest.approx(math.log(2), abs=1e-12)
            loss, _ = smoothed_bce(np.array([0.0]), np.array([False]), eps)
            assert loss == pytest.approx(math.log(2), abs=1e-12)

    def test_positive_score_two(self):
        # -ln(sigmoid(2)) evaluated at high precision
        loss, _ = smoothed_bce(np.array([2.0]), np.array([True]), 0.0)
        assert loss == pytest.approx(0.12692801104297249, abs=1e-12)

    def test_smoothed_targets(self):
        scores = np.array([1.5, -0.5])
        labels = np.array([True, False])
        eps = 0.001
        loss, grad = smoothed_bce(scores, labels, eps)
        # independent direct evaluation of the definition
        targets = [1 - eps, eps]
        expected = np.mean([
            -(t * math.log(1 / (1 + math.exp(-s))) + (1 - t) * math.log(1 - 1 / (1 + math.exp(-s))))
            for s, t in zip(scores, targets)
        ])
        assert loss == pytest.approx(expected, rel=1e-12)
        for g, s, t in zip(grad, scores, targets):
            assert g == pytest.approx((1 / (1 + math.exp(-s)) - t) / 2, rel=1e-12)

    def test_stable_at_extreme_scores(self):
        loss, grad = smoothed_bce(np.array([1e4, -1e4]), np.array([False, True]), 0.0)
        assert np.isfinite(loss) and np.all(np.isfinite(grad))

    def test_invalid_smoothing(self):
        with pytest.raises(ConfigError):
            smoothed_bce(np.array([0.0]), np.array([True]), 1.0)


class TestAdamStep:
    def test_first_step_is_signed_learning_rate(self):
        model = init_params("unimodal", 3, 2, 4, seed=0)
        state = AdamState.for_model(model)
        before = model.entity_emb.copy()
        grads = {
            "entity_emb": np.full_like(model.entity_emb, 0.37),
            "relation_emb": np.full_like(model.relation_emb, -2.0),
        }
        adam_step(model, grads, state, lr=0.01)
        np.testing.assert_allclose(before - model.entity_emb, 0.01 * np.sign(0.37), rtol=1e-6)

    def test_zero_gradient_is_fixed_point(self):
        model = init_params("unimodal", 3, 2, 4, seed=1)
        state = AdamState.for_model(model)
        before = {k: v.copy() for k, v in model.named_arrays().items()}
        grads = {k: np.zeros_like(v) for k, v in model.named_arrays().items()}
        adam_step(model, grads, state, lr=0.05)
        for name, arr in model.named_arrays().items():
            np.testing.assert_array_equal(arr, before[name])

    def test_two_steps_match_scalar_trace(self):
        # hand-rolled two-iteration Adam on a single coordinate
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        theta, m, v = 0.5, 0.0, 0.0
        for t, g in ((1, 0.3), (2, -0.2)):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)

        model = init_params("unimodal", 1, 1, 1, seed=2)
        model.entity_emb[0, 0] = 0.5
        state = AdamState.for_model(model)
        for g in (0.3, -0.2):
            grads = {
                "entity_emb": np.array([[g]]),
                "relation_emb": np.zeros((1, 1)),
            }
            adam_step(model, grads, state, lr=lr)
        assert model.entity_emb[0, 0] == pytest.approx(theta, abs=1e-12)

    def test_nan_gradient_aborts(self):
        model = init_params("unimodal", 2, 1, 2, seed=3)
        state = AdamState.for_model(model)
        grads = {k: np.zeros_like(v) for k, v in model.named_arrays().items()}
        grads["entity_emb"][0, 0] = np.nan
        with pytest.raises(TrainingError):
            adam_step(model, grads, state, lr=0.01)

    def test_moment_shapes_mirror_parameters(self):
        model = init_params("ggru", 3, 2, 4, literal_dim=2, seed=4)
        state = AdamState.for_model(model)
        for name, arr in model.named_arrays().items():
            assert state.moments1[name].shape == arr.shape
            assert state.moments2[name].shape == arr.shape


def finite_difference_check(variant, seed, probes=40, h=6, d=3, step=1e-5, tol=1e-4):
    """Relative error of analytic vs central-difference gradients."""
    rng = np.random.default_rng(seed)
    num_entities, num_relations = 7, 3
    model = init_params(variant, num_entities, num_relations, h, literal_dim=d, seed=seed)
    literal_mat = rng.normal(size=(num_entities, d)) if variant != "unimodal" else None
    year_arr = rng.uniform(size=num_entities) if variant != "unimodal" else None
    triples = np.stack([
        rng.integers(0, num_entities, size=5),
        rng.integers(0, num_relations, size=5),
        rng.integers(0, num_entities, size=5),
    ], axis=1)
    targets = rng.uniform(0.0, 1.0, size=5)

    _, grads = forward_backward(model, triples, targets, literal_mat, year_arr)
    checked = 0
    names = sorted(model.named_arrays())
    while checked < probes:
        name = names[rng.integers(len(names))]
        arr = model.named_arrays()[name]
        flat_index = int(rng.integers(arr.size))
        idx = np.unravel_index(flat_index, arr.shape)
        analytic = grads[name][idx]
        original = arr[idx]
        arr[idx] = original + step
        up = forward_loss(model, triples, targets, literal_mat, year_arr)
        arr[idx] = original - step
        down = forward_loss(model, triples, targets, literal_mat, year_arr)
        arr[idx] = original
        numeric = (up - down) / (2 * step)
        scale = max(abs(analytic), abs(numeric), 1e-8)
        assert abs(analytic - numeric) / scale < tol, (
            f"{variant}/{name}{idx}: analytic {analytic} vs numeric {numeric}"
        )
        checked += 1
    return checked


class TestGradients:
    @pytest.mark.parametrize("variant", ["unimodal", "glin", "ggru"])
    def test_analytic_matches_finite_differences(self, variant):
        assert finite_difference_check(variant, seed=11) == 40


def memorizable_kg():
    """Tiny memorizable graph: 6 entities, 2 relations, 12 triples.

    Uses a bipartite relation plus a symmetric one so that the scorer's
    head/tail symmetry never forces a false triple to tie a true one.
    """
    lines = []
    for p, (x, y) in enumerate([(0, 1), (1, 2), (2, 0)]):
        lines.append(f"p/{p}\tcreator\ta/{x}\tiri")
        lines.append(f"p/{p}\tcreator\ta/{y}\tiri")
    for x, y in [(0, 1), (1, 2), (2, 0)]:
        lines.append(f"a/{x}\tknows\ta/{y}\tiri")
        lines.append(f"a/{y}\tknows\ta/{x}\tiri")
    return parse_triples(io.StringIO("\n".join(lines) + "\n"))


class TestTrainModel:
    def test_overfit_toy_graph_reaches_perfect_mrr(self):
        kg = memorizable_kg()
        split = split_structural(kg, ratios=(1.0, 0.0, 0.0), seed=0)
        config = TrainConfig(
            embedding_dim=16, learning_rate=0.05, negatives_per_triple=4,
            batch_size=16, smoothing=0.0, max_epochs=200, eval_frequency=0,
            patience=10, seed=0,
        )
        model, history = train_model(kg, split, "unimodal", config=config)
        triples = np.array(kg.object_triples)
        metrics = eval_link_prediction(model, triples, triples)
        assert metrics.mrr == pytest.approx(1.0)
        assert metrics.hits1 == pytest.approx(1.0)

    @pytest.mark.parametrize("variant", ["unimodal", "glin", "ggru"])
    def test_loss_decreases_by_epoch_50(self, variant):
        kg = memorizable_kg()
        split = split_structural(kg, ratios=(1.0, 0.0, 0.0), seed=1)
        rng = np.random.default_rng(0)
        text = TextFeatureTable(dim=4, vectors={i: rng.normal(size=4) for i in range(6)})
        numeric = NumericFeatureTable(values={i: float(rng.uniform()) for i in range(6)})
        config = TrainConfig(
            embedding_dim=16, learning_rate=0.02, negatives_per_triple=4,
            batch_size=16, smoothing=0.01, max_epochs=50, eval_frequency=0,
            patience=10, seed=2,
        )
        _, history = train_model(kg, split, variant, text, numeric, config)
        assert history.losses[49] < history.losses[0]

    def test_deterministic_loss_curves(self):
        kg = memorizable_kg()
        split = split_structural(kg, ratios=(0.8, 0.2, 0.0), seed=3)
        config = TrainConfig(
            embedding_dim=8, learning_rate=0.05, negatives_per_triple=3,
            batch_size=8, smoothing=0.01, max_epochs=20, eval_frequency=10,
            patience=5, seed=7,
        )
        _, hist_a = train_model(kg, split, "unimodal", config=config)
        _, hist_b = train_model(kg, split, "unimodal", config=config)
        assert hist_a.losses == hist_b.losses

    def test_early_stopping_returns_best_checkpoint(self):
        kg = memorizable_kg()
        split = split_structural(kg, ratios=(0.7, 0.3, 0.0), seed=4)
        config = TrainConfig(
            embedding_dim=8, learning_rate=0.1, negatives_per_triple=4,
            batch_size=8, smoothing=0.0, max_epochs=400, eval_frequency=5,
            patience=2, seed=5,
        )
        model, history = train_model(kg, split, "unimodal", config=config)
        assert history.best_epoch is not None
        best_mrr = max(m.mrr for _, m in history.evals)
        valid = np.array(split.triples(kg, "valid"))
        all_triples = np.array(kg.object_triples)
        returned = eval_link_prediction(model, valid, all_triples)
        assert returned.mrr == pytest.approx(best_mrr, abs=1e-12)
        # stopped before exhausting the epoch budget
        assert history.stopped_epoch < 400

    def test_empty_train_split_rejected(self):
        kg = memorizable_kg()
        split = split_structural(kg, ratios=(0.8, 0.2, 0.0), seed=0)
        split.train = []
        with pytest.raises(ConfigError):
            train_model(kg, split, "unimodal", config=TrainConfig(embedding_dim=8, max_epochs=1))

    def test_epoch_log_lines(self):
        kg = memorizable_kg()
        split = split_structural(kg, ratios=(0.8, 0.2, 0.0), seed=3)
        config = TrainConfig(
            embedding_dim=8, learning_rate=0.05, negatives_per_triple=3,
            batch_size=8, smoothing=0.01, max_epochs=10, eval_frequency=10,
            patience=5, seed=7,
        )
        stream = io.StringIO()
        train_model(kg, split, "unimodal", config=config, log_stream=stream)
        lines = stream.getvalue().splitlines()
        plain = [l for l in lines if not l.startswith("eval\t")]
        evals = [l for l in lines if l.startswith("eval\t")]
        assert len(plain) == 10
        assert plain[0].split("\t")[0] == "1"
        assert len(evals) == 1 and len(evals[0].split("\t")) == 6


class TestEvalLinkPrediction:
    def test_ranks_match_exhaustive_enumeration(self):
        # 3-entity toy graph scored by hand
        model = init_params("unimodal", 3, 1, 2, seed=0)
        model.entity_emb[:] = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
        model.relation_emb[:] = [[1.0, 1.0]]
        triples = np.array([[0, 0, 2]])
        # tail scores for (0, r): e0*r*e_t -> t=0: 1, t=1: 0, t=2: 1
        # head scores for (r, 2): t=2 fixed -> h=0: 1, h=1: 1, h=2: 2
        # tail rank of 2 (tie with 0): (0 + 1 + 2) / 2 = 1.5
        # head rank of 0 (behind 2, tie with 1): (1 + 1 + 3) / 2 = 2.5
        metrics = eval_link_prediction(model, triples, triples)
        expected_mrr = np.mean([1 / 1.5, 1 / 2.5])
        assert metrics.mrr == pytest.approx(expected_mrr, abs=1e-12)

    def test_perfect_model_scores_one(self):
        kg = memorizable_kg()
        split = split_structural(kg, ratios=(1.0, 0.0, 0.0), seed=0)
        config = TrainConfig(
            embedding_dim=16, learning_rate=0.05, negatives_per_triple=4,
            batch_size=16, smoothing=0.0, max_epochs=200, eval_frequency=0,
            patience=10, seed=0,
        )
        model, _ = train_model(kg, split, "unimodal", config=config)
        triples = np.array(kg.object_triples)
        metrics = eval_link_prediction(model, triples, triples)
        assert metrics.hits1 == 1.0 and metrics.mrr == 1.0

    def test_all_equal_scores_rank_is_midpoint(self):
        num_entities = 9
        model = init_params("unimodal", num_entities, 1, 2, seed=0)
        model.entity_emb[:] = 1.0
        model.relation_emb[:] = 1.0
        triples = np.array([[0, 0, 1]])
        metrics = eval_link_prediction(model, triples, triples)
        expected_rank = (num_entities + 1) / 2
        assert metrics.mrr == pytest.approx(1 / expected_rank)

    def test_filter_removes_known_corruptions(self):
        model = init_params("unimodal", 4, 1, 2, seed=0)
        model.entity_emb[:] = [[1, 0], [1, 0], [1, 0], [1, 0]]
        model.relation_emb[:] = [[1, 1]]
        eval_triples = np.array([[0, 0, 1]])
        # (0,0,2) and (0,0,3) are known true: filtered out of tail candidates
        filter_triples = np.array([[0, 0, 1], [0, 0, 2], [0, 0, 3]])
        metrics = eval_link_prediction(model, eval_triples, filter_triples)
        # tail side: candidates {0, 1} all tied -> rank 1.5
        # head side: all 4 candidates tied -> rank 2.5
        expected = np.mean([1 / 1.5, 1 / 2.5])
        assert metrics.mrr == pytest.approx(expected, abs=1e-12)


class TestTrainConfig:
    def test_out_of_range_values_warn_but_pass(self, caplog):
        import logging

        with caplog.at_level(logging.WARNING):
            TrainConfig(embedding_dim=64, learning_rate=0.5, negatives_per_triple=100,
                        batch_size=7, smoothing=0.0)
        messages = " ".join(rec.message for rec in caplog.records)
        for field in ("embedding_dim", "learning_rate", "negatives_per_triple",
                      "batch_size", "smoothing"):
            assert field in messages

    def test_presets(self):
        oc = TrainConfig.oc_defaults()
        assert (oc.embedding_dim, oc.learning_rate, oc.negatives_per_triple,
                oc.batch_size, oc.smoothing) == (512, 0.0003, 12, 512, 0.001)
        am = TrainConfig.aminer_defaults()
        assert (am.embedding_dim, am.learning_rate, am.negatives_per_triple,
                am.batch_size, am.smoothing) == (128, 0.0001, 32, 512, 0.1)
