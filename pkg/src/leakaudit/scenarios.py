"""Ready-made audit scenarios used by the test-suite and the notebooks.

``overfit_scenario`` is the reference "high generalization gap" target:
30 training records, a [4, 64, 64, 2] rectifier network, trained until
its training loss is far below 0.01 on weakly separated Gaussian blobs.
"""

from __future__ import annotations

import dataclasses

from leakaudit import attacks, datasets, models
from leakaudit.datasets import AuditSplit, LabeledDataset
from leakaudit.models import DpParams, MlpModel, TrainConfig

OVERFIT_LAYERS = (4, 64, 64, 2)
OVERFIT_MEMBERS = 30
OVERFIT_NONMEMBERS = 60
OVERFIT_SEPARATION = 0.5
OVERFIT_PER_CLASS = 150


@dataclasses.dataclass(frozen=True, eq=False)
class Scenario:
    dataset: LabeledDataset
    split: AuditSplit
    train_config: TrainConfig
    shadow_config: attacks.ShadowConfig
    layer_sizes: tuple[int, ...]
    seed: int

    @property
    def members(self) -> LabeledDataset:
        return self.dataset.subset(self.split.member_idx)

    @property
    def nonmembers(self) -> LabeledDataset:
        return self.dataset.subset(self.split.nonmember_idx)

    def untrained_target(self) -> MlpModel:
        return models.init_mlp(self.layer_sizes, self.seed)

    def train_target(self) -> MlpModel:
        model, _ = models.train_sgd(self.untrained_target(), self.members, self.train_config)
        return model


def overfit_scenario(seed: int = 0, n_shadows: int = 4) -> Scenario:
    dataset = datasets.generate_synthetic(
        OVERFIT_PER_CLASS, OVERFIT_LAYERS[0], OVERFIT_LAYERS[-1], OVERFIT_SEPARATION, seed
    )
    split = datasets.make_audit_split(dataset, OVERFIT_MEMBERS, OVERFIT_NONMEMBERS, seed)
    train_config = TrainConfig(learning_rate=0.1, epochs=1000, batch_size=10, seed=seed)
    # Shadows train on as many records as the target did.
    fraction = OVERFIT_MEMBERS / split.population_idx.size
    shadow_config = attacks.ShadowConfig(
        n_shadows=n_shadows,
        shadow_train_fraction=fraction,
        shadow_model_layers=OVERFIT_LAYERS,
        shadow_train_config=train_config,
        attack_train_config=TrainConfig(learning_rate=0.1, epochs=200, batch_size=32, seed=seed),
        seed=seed,
    )
    return Scenario(dataset, split, train_config, shadow_config, OVERFIT_LAYERS, seed)


def dp_sweep_config(seed: int = 0, clip_norm: float = 1.0, delta: float = 1e-5) -> TrainConfig:
    """Full-batch DP-SGD recipe for the overfit scenario; the sweep sets the noise multiplier."""
    return TrainConfig(
        learning_rate=2.0,
        epochs=20,
        batch_size=OVERFIT_MEMBERS,
        seed=seed,
        dp=DpParams(clip_norm=clip_norm, noise_multiplier=0.0, delta=delta),
    )


def attack_scenario(scenario: Scenario, trained: bool = True, threads: int = 1):
    """Runs all three attacks against the scenario's target.

    Args:
      scenario: The scenario to audit.
      trained: Attack the trained target when true, else its untrained
        initialization.
      threads: Parallel shadow trainings.

    Returns:
      ``(target, {attack name: records})``.
    """
    target = scenario.train_target() if trained else scenario.untrained_target()
    results = attacks.run_attacks(
        target, scenario.dataset, scenario.split, attacks.ATTACK_ORDER,
        scenario.shadow_config, threads,
    )
    return target, results
