import math

import numpy as np
import pytest

from leakaudit import attacks, datasets, metrics, models
from leakaudit.attacks import ShadowConfig
from leakaudit.datasets import LabeledDataset
from leakaudit.errors import (
    ArchitectureMismatch,
    InsufficientPopulation,
    InvalidArgument,
    ShapeMismatch,
)
from leakaudit.models import MlpModel, TrainConfig

from conftest import overfit_audit

LAYERS = (3, 8, 2)


def small_setup(seed=0, n_shadows=3, fraction=0.5):
    ds = datasets.generate_synthetic(40, 3, 2, 1.0, seed)
    split = datasets.make_audit_split(ds, 20, 20, seed)
    target, _ = models.train_sgd(
        models.init_mlp(LAYERS, seed), ds.subset(split.member_idx),
        TrainConfig(0.1, 100, 5, seed=seed),
    )
    cfg = ShadowConfig(
        n_shadows=n_shadows,
        shadow_train_fraction=fraction,
        shadow_model_layers=LAYERS,
        shadow_train_config=TrainConfig(0.1, 30, 5),
        attack_train_config=TrainConfig(0.1, 30, 16),
        seed=seed,
    )
    return ds, split, target, cfg


def exhaustive_check(records, split, dataset, name):
    members = set(split.member_idx.tolist())
    assert [r.record_id for r in records] == split.audited_idx().tolist()
    for r in records:
        assert r.is_member == (r.record_id in members)
        assert r.class_label == dataset.labels[r.record_id]
        assert r.attack_name == name
        assert math.isfinite(r.score)


class TestPopulationLoss:
    def test_scores_are_negated_losses(self):
        ds, split, target, _ = small_setup()
        records = attacks.population_loss_attack(target, ds, split)
        exhaustive_check(records, split, ds, "population_loss")
        ids = split.audited_idx()
        losses = models.per_example_losses(target, ds.features[ids], ds.labels[ids])
        np.testing.assert_array_equal([r.score for r in records], -losses)

    def test_zero_loss_gives_max_score(self):
        model = MlpModel((1, 2), (np.array([[1e3], [-1e3]]),), (np.zeros(2),))
        ds = LabeledDataset([[1.0], [1.0], [1.0]], [0, 1, 0], 2)
        split = datasets.AuditSplit(np.array([0]), np.array([1]), np.array([2]), 0)
        records = attacks.population_loss_attack(model, ds, split)
        assert records[0].score == 0.0
        assert records[1].score < records[0].score

    def test_order_reversal(self):
        ds, split, target, _ = small_setup()
        records = attacks.population_loss_attack(target, ds, split)
        losses = {r.record_id: -r.score for r in records}
        a, b = sorted(losses, key=losses.get)[:: len(losses) - 1]
        assert losses[a] < losses[b]
        by_id = {r.record_id: r.score for r in records}
        assert by_id[a] > by_id[b]

    def test_shape_mismatch(self):
        ds, split, _, _ = small_setup()
        with pytest.raises(ShapeMismatch):
            attacks.population_loss_attack(models.init_mlp([4, 2], 0), ds, split)


class TestFeatures:
    def test_prediction_feature_layout(self):
        ds, _, target, _ = small_setup()
        feats = attacks.prediction_features(target, ds.features, ds.labels)
        assert feats.shape == (len(ds), 4)
        assert np.all(np.diff(feats[:, :2], axis=1) <= 0)
        np.testing.assert_allclose(feats[:, :2].sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_array_equal(feats[:, 2:], np.eye(2)[ds.labels])

    def test_whitebox_length(self):
        ds = datasets.generate_synthetic(5, 2, 2, 1.0, 0)
        v = attacks.extract_whitebox_features(models.init_mlp([2, 8, 2], 0), ds, 3)
        assert v.shape == (7,)

    def test_whitebox_confident_record(self):
        model = MlpModel((2, 2), (np.array([[1e3, 0.0], [-1e3, 0.0]]),), (np.zeros(2),))
        ds = LabeledDataset([[1.0, 0.5]], [0], 2)
        v = attacks.extract_whitebox_features(model, ds, 0)
        assert v[0] == 0.0 and v[1] == 0.0
        assert v[2] == 1.0 and v[3] == 1.0

    def test_whitebox_contains_loss_attack_signal(self):
        ds, _, target, _ = small_setup()
        v = attacks.extract_whitebox_features(target, ds, 0)
        p_true = models.forward(target, ds.features[:1])[0, ds.labels[0]]
        assert v[1 + 2] == p_true
        assert v[0] == pytest.approx(-math.log(p_true), rel=1e-12)

    def test_whitebox_deterministic(self):
        ds, _, target, _ = small_setup()
        a = attacks.extract_whitebox_features(target, ds, 7)
        b = attacks.extract_whitebox_features(target, ds, 7)
        assert a.tobytes() == b.tobytes()

    def test_vectorized_matches_per_record(self):
        ds, _, target, _ = small_setup(seed=3)
        matrix = attacks.whitebox_feature_matrix(target, ds.features, ds.labels)
        for i in range(len(ds)):
            np.testing.assert_allclose(
                matrix[i], attacks.extract_whitebox_features(target, ds, i), rtol=1e-10, atol=1e-14
            )

    @pytest.mark.parametrize("record_id", [-1, 80, 2.5])
    def test_whitebox_bad_record(self, record_id):
        ds, _, target, _ = small_setup()
        with pytest.raises(InvalidArgument):
            attacks.extract_whitebox_features(target, ds, record_id)


class TestShadows:
    def test_split_arithmetic(self):
        pop = datasets.generate_synthetic(50, 3, 2, 1.0, 0)
        _, _, _, cfg = small_setup(n_shadows=4, fraction=0.5)
        shadows = attacks.train_shadow_models(pop, cfg)
        assert len(shadows) == 4
        for s in shadows:
            assert s.in_idx.size == 50 and s.out_idx.size == 50
            assert not set(s.in_idx.tolist()) & set(s.out_idx.tolist())
            assert set(s.in_idx.tolist()) | set(s.out_idx.tolist()) == set(range(100))
        assert len({s.in_idx.tobytes() for s in shadows}) == 4

    def test_one_shadow_rejected(self):
        _, _, _, cfg = small_setup()
        with pytest.raises(InvalidArgument):
            ShadowConfig(1, 0.5, LAYERS, cfg.shadow_train_config, cfg.attack_train_config)

    @pytest.mark.parametrize("fraction", [0.0, 1.0])
    def test_fraction_range(self, fraction):
        _, _, _, cfg = small_setup()
        with pytest.raises(InvalidArgument):
            ShadowConfig(2, fraction, LAYERS, cfg.shadow_train_config, cfg.attack_train_config)

    def test_insufficient_population(self):
        _, _, _, cfg = small_setup(fraction=0.9)
        pop = datasets.generate_synthetic(2, 3, 2, 1.0, 0)
        with pytest.raises(InsufficientPopulation):
            attacks.train_shadow_models(pop, cfg)

    def test_deterministic_and_thread_independent(self):
        pop = datasets.generate_synthetic(30, 3, 2, 1.0, 1)
        _, _, _, cfg = small_setup()
        a = attacks.train_shadow_models(pop, cfg)
        b = attacks.train_shadow_models(pop, cfg, threads=3)
        for sa, sb in zip(a, b):
            assert sa.in_idx.tobytes() == sb.in_idx.tobytes()
            for wa, wb in zip(sa.model.weights, sb.model.weights):
                assert wa.tobytes() == wb.tobytes()

    def test_config_round_trip(self):
        _, _, _, cfg = small_setup()
        assert ShadowConfig.from_dict(cfg.to_dict()) == cfg


class TestAttackDataset:
    def test_balanced(self):
        pop = datasets.generate_synthetic(30, 3, 2, 1.0, 2)
        _, _, _, cfg = small_setup(fraction=0.3)
        shadows = attacks.train_shadow_models(pop, cfg)
        data = attacks.build_attack_dataset(shadows, pop, seed=cfg.seed)
        ones = int(np.sum(data.labels == 1))
        assert ones == int(np.sum(data.labels == 0))
        assert ones == cfg.n_shadows * min(shadows[0].in_idx.size, shadows[0].out_idx.size)
        assert data.n_features == 4

    def test_whitebox_featurizer(self):
        pop = datasets.generate_synthetic(30, 3, 2, 1.0, 2)
        _, _, _, cfg = small_setup()
        shadows = attacks.train_shadow_models(pop, cfg)
        data = attacks.build_attack_dataset(
            shadows, pop, featurizer=attacks.whitebox_feature_matrix
        )
        assert data.n_features == 1 + 2 + 2 + 2


class TestShadowAttacks:
    @pytest.mark.parametrize(
        "fn,name",
        [(attacks.shadow_attack, "shadow_blackbox"), (attacks.whitebox_attack, "shadow_whitebox")],
    )
    def test_records(self, fn, name):
        ds, split, target, cfg = small_setup()
        records = fn(target, ds, split, cfg)
        exhaustive_check(records, split, ds, name)
        assert all(0.0 <= r.score <= 1.0 for r in records)

    def test_architecture_mismatch(self):
        ds, split, target, cfg = small_setup()
        other = ShadowConfig(2, 0.5, (3, 4, 2), cfg.shadow_train_config, cfg.attack_train_config)
        with pytest.raises(ArchitectureMismatch):
            attacks.whitebox_attack(target, ds, split, other)
        # the black-box attack accepts a different shadow architecture
        attacks.shadow_attack(target, ds, split, other)

    def test_no_member_label_leak(self, monkeypatch):
        ds, split, target, cfg = small_setup()
        captured = []
        real = attacks.train_attack

        def spy(population, *args, **kwargs):
            captured.append(population)
            clf = real(population, *args, **kwargs)
            captured.append(clf)
            return clf

        monkeypatch.setattr(attacks, "train_attack", spy)
        attacks.shadow_attack(target, ds, split, cfg)

        # scramble every member row and its label; nothing the attacker trains on may change
        x = ds.features.copy()
        y = ds.labels.copy()
        rng = np.random.default_rng(0)
        x[split.member_idx] = rng.normal(size=(split.member_idx.size, x.shape[1])) * 100
        y[split.member_idx] = 1 - y[split.member_idx]
        attacks.shadow_attack(target, LabeledDataset(x, y, 2), split, cfg)

        pop_a, clf_a, pop_b, clf_b = captured
        assert len(pop_a) == split.population_idx.size
        np.testing.assert_array_equal(pop_a.features, pop_b.features)
        for wa, wb in zip(clf_a.model.weights, clf_b.model.weights):
            assert wa.tobytes() == wb.tobytes()
        assert clf_a.mean.tobytes() == clf_b.mean.tobytes()

    def test_run_attacks_shares_shadows(self):
        ds, split, target, cfg = small_setup()
        both = attacks.run_attacks(target, ds, split, ["shadow_whitebox", "population_loss",
                                                       "shadow_blackbox"], cfg)
        assert list(both) == list(attacks.ATTACK_ORDER)
        alone = attacks.shadow_attack(target, ds, split, cfg)
        assert [r.score for r in both["shadow_blackbox"]] == [r.score for r in alone]

    def test_run_attacks_threads(self):
        ds, split, target, cfg = small_setup()
        a = attacks.run_attacks(target, ds, split, attacks.ATTACK_ORDER, cfg, threads=1)
        b = attacks.run_attacks(target, ds, split, attacks.ATTACK_ORDER, cfg, threads=4)
        assert a == b

    def test_run_attacks_errors(self):
        ds, split, target, cfg = small_setup()
        with pytest.raises(InvalidArgument):
            attacks.run_attacks(target, ds, split, ["label_only"], cfg)
        with pytest.raises(InvalidArgument):
            attacks.run_attacks(target, ds, split, ["shadow_blackbox"], None)


@pytest.mark.slow
class TestOverfitFixture:
    """Leakage on the canonical overfit target (seeds 0-2) versus untrained ones (seeds 0-4)."""

    def test_population_loss_seed0(self):
        _, results = overfit_audit(0)
        assert metrics.auc(results["population_loss"]) >= 0.7

    def test_shadow_attacks_average(self):
        bb = [metrics.auc(overfit_audit(s)[1]["shadow_blackbox"]) for s in range(3)]
        wb = [metrics.auc(overfit_audit(s)[1]["shadow_whitebox"]) for s in range(3)]
        assert np.mean(bb) >= 0.6
        assert np.mean(wb) >= 0.6

    @pytest.mark.parametrize("seed", range(5))
    def test_untrained_population_loss(self, seed):
        auc = metrics.auc(overfit_audit(seed, trained=False)[1]["population_loss"])
        assert 0.40 <= auc <= 0.60

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("name", ["shadow_blackbox", "shadow_whitebox"])
    def test_untrained_shadow_attacks(self, seed, name):
        auc = metrics.auc(overfit_audit(seed, trained=False)[1][name])
        assert 0.35 <= auc <= 0.65
