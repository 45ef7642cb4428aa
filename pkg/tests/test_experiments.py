"""Tests for the training harness, evaluation, and the study harnesses."""

from dataclasses import asdict, replace

import numpy as np
import pytest

from lddg.data import DomainDataset, SyntheticConfig, generate_synthetic
from lddg.experiments import (
    ABLATION_CELLS,
    ablate_components,
    evaluate,
    sweep_rank,
    train,
)
from lddg.model import TrainConfig, forward

TINY_DATA = SyntheticConfig(
    num_domains=2,
    num_classes=2,
    feature_dim=8,
    latent_dim_true=4,
    samples_per_domain_class=8,
    target_samples_per_class=10,
    domain_scales=(1.0, 1.2),
    target_mixture=(0.6, 0.4),
)

TINY_TRAIN = TrainConfig(
    epochs=3,
    batch_per_domain=4,
    latent_dim=6,
    encoder_dims=(8,),
    head_hidden_dim=8,
    lr_decay_every=2,
)


@pytest.fixture(scope="module")
def tiny():
    sources, target = generate_synthetic(TINY_DATA)
    return sources, target


class TestTrain:
    def test_epoch_records_and_lr_schedule(self, tiny):
        sources, _ = tiny
        params, result = train(TINY_TRAIN, sources)
        assert len(result.epochs) == 3
        assert [r.epoch for r in result.epochs] == [0, 1, 2]
        lr0 = TINY_TRAIN.learning_rate
        expected_lr = [lr0, lr0, lr0 / TINY_TRAIN.lr_decay_factor]
        np.testing.assert_allclose([r.lr for r in result.epochs], expected_lr)
        assert result.wall_time_s > 0.0
        assert len(result.source_accuracy) == sources.num_domains
        assert result.config == asdict(TINY_TRAIN)

    def test_record_totals_decompose(self, tiny):
        sources, _ = tiny
        cfg = TINY_TRAIN
        _, result = train(cfg, sources)
        for rec in result.epochs:
            np.testing.assert_allclose(
                rec.total,
                rec.cls + cfg.lambda1 * rec.rank + cfg.lambda2 * rec.kl,
                atol=1e-12,
            )

    def test_deterministic_under_seed(self, tiny):
        sources, _ = tiny
        p1, r1 = train(TINY_TRAIN, sources)
        p2, r2 = train(TINY_TRAIN, sources)
        for a, b in zip(p1.flat(), p2.flat()):
            np.testing.assert_array_equal(a, b)
        for ra, rb in zip(r1.epochs, r2.epochs):
            assert asdict(ra) == asdict(rb)

    def test_seed_changes_trajectory(self, tiny):
        sources, _ = tiny
        _, r1 = train(TINY_TRAIN, sources)
        _, r2 = train(replace(TINY_TRAIN, seed=1), sources)
        assert r1.epochs[-1].total != r2.epochs[-1].total

    def test_singular_values_logged_on_request(self, tiny):
        sources, _ = tiny
        cfg = replace(TINY_TRAIN, log_singular_values=True)
        _, result = train(cfg, sources)
        for rec in result.epochs:
            sv = rec.singular_values
            assert sv is not None
            assert len(sv) <= 8
            assert all(a >= b - 1e-12 for a, b in zip(sv, sv[1:]))
        _, plain = train(TINY_TRAIN, sources)
        assert all(rec.singular_values is None for rec in plain.epochs)

    def test_non_finite_loss_aborts_with_location(self, tiny):
        sources, _ = tiny
        huge = DomainDataset(
            num_domains=sources.num_domains,
            num_classes=sources.num_classes,
            feature_dim=sources.feature_dim,
            features=sources.features * 1e160,
            labels=sources.labels,
            domain_ids=sources.domain_ids,
        )
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(
            RuntimeError, match="epoch 0"
        ):
            train(replace(TINY_TRAIN, epochs=1), huge)


class TestEvaluate:
    def test_matches_manual_forward_argmax(self, tiny):
        sources, target = tiny
        params, _ = train(TINY_TRAIN, sources)
        report = evaluate(params, target)
        trace = forward(params, target.features, None)
        pred = np.argmax(trace.logits, axis=1)
        np.testing.assert_allclose(
            report.accuracy, np.mean(pred == target.labels), atol=1e-15
        )
        assert len(report.per_domain) == 1
        np.testing.assert_allclose(report.per_domain[0], report.accuracy)

    def test_per_domain_breakdown(self, tiny):
        sources, _ = tiny
        params, _ = train(TINY_TRAIN, sources)
        report = evaluate(params, sources)
        trace = forward(params, sources.features, None)
        correct = np.argmax(trace.logits, axis=1) == sources.labels
        for k in range(sources.num_domains):
            np.testing.assert_allclose(
                report.per_domain[k], np.mean(correct[sources.domain_ids == k])
            )
        np.testing.assert_allclose(report.accuracy, np.mean(correct))


class TestAblation:
    def test_cells_and_shapes(self, tiny):
        sources, target = tiny
        rows = ablate_components(TINY_TRAIN, sources, target, seeds=(0,))
        assert [r.cell for r in rows] == [c[0] for c in ABLATION_CELLS]
        for row in rows:
            assert len(row.accuracies) == 1
            assert 0.0 <= row.mean <= 1.0
            assert row.std == 0.0

    def test_cell_subset_and_unknown_cell(self, tiny):
        sources, target = tiny
        rows = ablate_components(
            TINY_TRAIN, sources, target, seeds=(0,), cells=("none", "rank+kl")
        )
        assert [r.cell for r in rows] == ["none", "rank+kl"]
        with pytest.raises(ValueError, match="unknown"):
            ablate_components(TINY_TRAIN, sources, target, cells=("bogus",))

    def test_none_cell_ignores_base_lambdas(self, tiny):
        # The 'none' cell zeroes both penalty weights, so the base config's
        # lambdas must not influence it.
        sources, target = tiny
        a = ablate_components(TINY_TRAIN, sources, target, seeds=(0,), cells=("none",))
        hot = replace(TINY_TRAIN, lambda1=5.0, lambda2=5.0)
        b = ablate_components(hot, sources, target, seeds=(0,), cells=("none",))
        assert a[0].accuracies == b[0].accuracies


class TestSweepRank:
    def test_single_rank_equals_train_eval_pair(self, tiny):
        sources, target = tiny
        rows = sweep_rank(TINY_TRAIN, sources, target, ranks=(3,), seeds=(0,))
        params, _ = train(replace(TINY_TRAIN, rank_target=3, seed=0), sources)
        direct = evaluate(params, target).accuracy
        assert rows[0].rank == 3
        assert rows[0].accuracies == [direct]
        assert rows[0].mean == direct

    def test_row_per_rank_with_stats(self, tiny):
        sources, target = tiny
        rows = sweep_rank(TINY_TRAIN, sources, target, ranks=(1, 2, 4), seeds=(0, 1))
        assert [r.rank for r in rows] == [1, 2, 4]
        for row in rows:
            assert len(row.accuracies) == 2
            np.testing.assert_allclose(row.mean, np.mean(row.accuracies))
            np.testing.assert_allclose(row.std, np.std(row.accuracies))

    def test_duplicate_ranks_rejected(self, tiny):
        sources, target = tiny
        with pytest.raises(ValueError, match="duplicate"):
            sweep_rank(TINY_TRAIN, sources, target, ranks=(2, 2), seeds=(0,))

    def test_out_of_range_ranks_rejected(self, tiny):
        sources, target = tiny
        # latent_dim=6 caps usable rank targets at 5
        with pytest.raises(ValueError, match="outside"):
            sweep_rank(TINY_TRAIN, sources, target, ranks=(6,), seeds=(0,))
        with pytest.raises(ValueError, match="outside"):
            sweep_rank(TINY_TRAIN, sources, target, ranks=(0,), seeds=(0,))
