"""Simulated membership inference attackers.

Three access levels are modelled:

* ``population_loss``: the attacker sees the target's loss on a record and
  calls low-loss records members.
* ``shadow_blackbox``: the attacker sees prediction vectors. It trains
  shadow models on population data it owns, learns how in- and
  out-of-training prediction vectors differ, and applies that classifier
  to the target's predictions.
* ``shadow_whitebox``: like the black-box attack, but the features include
  per-record gradient norms, which require the parameters.

Attack classifiers only ever see population records; the target's
training set reaches the attacks solely through the target model.
"""

from __future__ import annotations

import dataclasses
from concurrent import futures
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from leakaudit import models
from leakaudit import rng as rng_lib
from leakaudit.datasets import AuditSplit, LabeledDataset
from leakaudit.errors import (
    ArchitectureMismatch,
    InsufficientPopulation,
    InvalidArgument,
    ShapeMismatch,
)
from leakaudit.models import MlpModel, TrainConfig

POPULATION_LOSS = "population_loss"
SHADOW_BLACKBOX = "shadow_blackbox"
SHADOW_WHITEBOX = "shadow_whitebox"
ATTACK_ORDER = (POPULATION_LOSS, SHADOW_BLACKBOX, SHADOW_WHITEBOX)


@dataclasses.dataclass(frozen=True)
class AttackRecord:
    """One audited record's attack outcome; higher ``score`` means more member-like."""

    record_id: int
    is_member: bool
    score: float
    class_label: int
    attack_name: str


@dataclasses.dataclass(frozen=True)
class ShadowConfig:
    """How the shadow-model attacker is simulated.

    Attributes:
      n_shadows: Number of shadow models (>= 2).
      shadow_train_fraction: Share of the population each shadow trains on;
        the rest are that shadow's "out" records.
      shadow_model_layers: Shadow architecture. The white-box attack
        requires it to equal the target's.
      shadow_train_config: Training recipe for shadows (seed is re-derived
        per shadow).
      attack_train_config: Training recipe for the logistic-regression
        attack classifier.
      seed: Master seed for shadow splits, initializations and balancing.
    """

    n_shadows: int
    shadow_train_fraction: float
    shadow_model_layers: tuple[int, ...]
    shadow_train_config: TrainConfig
    attack_train_config: TrainConfig
    seed: int = 0

    def __post_init__(self):
        if int(self.n_shadows) != self.n_shadows or self.n_shadows < 2:
            raise InvalidArgument(f"n_shadows must be an integer >= 2, got {self.n_shadows}")
        if not 0.0 < self.shadow_train_fraction < 1.0:
            raise InvalidArgument(
                f"shadow_train_fraction must be in (0, 1), got {self.shadow_train_fraction}"
            )
        layers = tuple(int(s) for s in self.shadow_model_layers)
        if len(layers) < 2 or min(layers) <= 0:
            raise InvalidArgument(f"bad shadow_model_layers {self.shadow_model_layers}")
        object.__setattr__(self, "shadow_model_layers", layers)
        rng_lib.check_seed(self.seed)

    def to_dict(self) -> dict:
        return {
            "n_shadows": self.n_shadows,
            "shadow_train_fraction": self.shadow_train_fraction,
            "shadow_model_layers": list(self.shadow_model_layers),
            "shadow_train_config": self.shadow_train_config.to_dict(),
            "attack_train_config": self.attack_train_config.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShadowConfig":
        d = dict(d)
        d["shadow_train_config"] = TrainConfig.from_dict(d["shadow_train_config"])
        d["attack_train_config"] = TrainConfig.from_dict(d["attack_train_config"])
        d["shadow_model_layers"] = tuple(d["shadow_model_layers"])
        return cls(**d)


class Shadow(NamedTuple):
    model: MlpModel
    in_idx: np.ndarray
    out_idx: np.ndarray


@dataclasses.dataclass(frozen=True, eq=False)
class AttackClassifier:
    """Logistic regression on standardized attack features."""

    model: MlpModel
    mean: np.ndarray
    scale: np.ndarray

    def membership_probability(self, features) -> np.ndarray:
        z = (np.asarray(features, dtype=np.float64) - self.mean) / self.scale
        return models.forward(self.model, z)[:, 1]


def _check_compatible(target: MlpModel, dataset: LabeledDataset, split: Optional[AuditSplit]):
    if target.layer_sizes[0] != dataset.n_features:
        raise ShapeMismatch(
            f"target expects {target.layer_sizes[0]} features, dataset has {dataset.n_features}"
        )
    if target.num_classes < dataset.num_classes:
        raise ShapeMismatch(
            f"target has {target.num_classes} outputs, dataset has {dataset.num_classes} classes"
        )
    if split is not None:
        split.check_against(dataset)


def _records(split, dataset, scores_by_id, name) -> list[AttackRecord]:
    members = set(split.member_idx.tolist())
    return [
        AttackRecord(
            record_id=int(i),
            is_member=int(i) in members,
            score=float(scores_by_id[k]),
            class_label=int(dataset.labels[i]),
            attack_name=name,
        )
        for k, i in enumerate(split.audited_idx())
    ]


def population_loss_attack(
    target: MlpModel, dataset: LabeledDataset, split: AuditSplit
) -> list[AttackRecord]:
    """Scores every audited record by its negated cross-entropy under ``target``."""
    _check_compatible(target, dataset, split)
    ids = split.audited_idx()
    losses = models.per_example_losses(target, dataset.features[ids], dataset.labels[ids])
    return _records(split, dataset, -losses, POPULATION_LOSS)


# -- features -----------------------------------------------------------------


def prediction_features(model: MlpModel, features, labels) -> np.ndarray:
    """Descending-sorted prediction vector followed by the one-hot true class."""
    probs = models.forward(model, features)
    sorted_probs = -np.sort(-probs, axis=1)
    onehot = np.eye(model.num_classes)[np.asarray(labels, dtype=np.int64)]
    return np.hstack([sorted_probs, onehot])


def whitebox_feature_matrix(model: MlpModel, features, labels) -> np.ndarray:
    """Row-wise :func:`extract_whitebox_features` for a batch of records."""
    x = models._check_batch(model, features)
    y = models._check_labels(model, labels, x.shape[0])
    inputs, logits = models._forward_pass(model.weights, model.biases, x)
    deltas = models._deltas(model.weights, inputs, logits, y)
    n = x.shape[0]
    log_p = models._log_softmax(logits)
    probs = np.exp(log_p)
    loss = -log_p[np.arange(n), y]
    # gradient of W_k for one record is the outer product delta_k a_k^T
    grad_norms = [
        np.linalg.norm(d, axis=1) * np.linalg.norm(a, axis=1) for d, a in zip(deltas, inputs)
    ]
    onehot = np.eye(model.num_classes)[y]
    return np.column_stack(
        [loss, *grad_norms, probs[np.arange(n), y], probs.max(axis=1), onehot]
    )


def extract_whitebox_features(model: MlpModel, dataset: LabeledDataset, record_id: int) -> np.ndarray:
    """White-box feature vector of one record.

    Layout: ``[loss, ||grad W_1||, ..., ||grad W_L||, p(true class),
    max probability, one-hot true class]``, length ``1 + L + 2 + C``.
    """
    if int(record_id) != record_id or not 0 <= record_id < len(dataset):
        raise InvalidArgument(f"record_id {record_id} out of range for {len(dataset)} records")
    x = dataset.features[int(record_id)]
    y = int(dataset.labels[int(record_id)])
    grads = models.per_example_gradient(model, x, y)
    probs = models.forward(model, x[None, :])[0]
    loss = float(models.per_example_losses(model, x[None, :], [y])[0])
    norms = [float(np.linalg.norm(g)) for g in grads.weights]
    onehot = np.eye(model.num_classes)[y]
    return np.array([loss, *norms, probs[y], probs.max(), *onehot])


# -- shadow models --------------------------------------------------------------


def _train_one_shadow(population: LabeledDataset, cfg: ShadowConfig, i: int) -> Shadow:
    n = len(population)
    n_in = int(round(cfg.shadow_train_fraction * n))
    if n_in < 1 or n - n_in < 1:
        raise InsufficientPopulation(
            f"population of {n} cannot give shadow {i} both in- and out-records "
            f"at fraction {cfg.shadow_train_fraction}"
        )
    perm = rng_lib.make_rng(cfg.seed, i, 0).permutation(n)
    in_idx = np.sort(perm[:n_in])
    out_idx = np.sort(perm[n_in:])
    init = models.init_mlp(cfg.shadow_model_layers, rng_lib.derive_seed(cfg.seed, i, 1))
    train_cfg = dataclasses.replace(
        cfg.shadow_train_config, seed=rng_lib.derive_seed(cfg.seed, i, 2)
    )
    model, _, _ = models.train(init, population.subset(in_idx), train_cfg)
    return Shadow(model, in_idx, out_idx)


def train_shadow_models(
    population: LabeledDataset, cfg: ShadowConfig, threads: int = 1
) -> list[Shadow]:
    """Trains ``cfg.n_shadows`` shadows on random in/out splits of ``population``.

    ``in_idx`` / ``out_idx`` index into ``population``. Each shadow's split,
    initialization and batch order come from seeds derived from
    ``(cfg.seed, shadow index)``, so results do not depend on ``threads``.
    """
    if cfg.shadow_model_layers[0] != population.n_features:
        raise ShapeMismatch(
            f"shadow input size {cfg.shadow_model_layers[0]} != {population.n_features} features"
        )
    if cfg.shadow_model_layers[-1] < population.num_classes:
        raise ShapeMismatch("shadow output layer smaller than the number of classes")
    if len(population) < 2:
        raise InsufficientPopulation(f"population of {len(population)} records is too small")
    if threads <= 1:
        return [_train_one_shadow(population, cfg, i) for i in range(cfg.n_shadows)]
    with futures.ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: _train_one_shadow(population, cfg, i), range(cfg.n_shadows)))


Featurizer = Callable[[MlpModel, np.ndarray, np.ndarray], np.ndarray]


def build_attack_dataset(
    shadows: Sequence[Shadow],
    population: LabeledDataset,
    seed: int = 0,
    featurizer: Featurizer = prediction_features,
) -> LabeledDataset:
    """Labeled membership examples from the shadows.

    For each shadow, the larger of its in/out sides is downsampled (seeded)
    to the size of the smaller one, so the result has equally many label-1
    ("in") and label-0 ("out") rows.
    """
    rows, labels = [], []
    for i, shadow in enumerate(shadows):
        k = min(shadow.in_idx.size, shadow.out_idx.size)
        gen = rng_lib.make_rng(seed, i, 3)
        in_idx = np.sort(gen.choice(shadow.in_idx, size=k, replace=False))
        out_idx = np.sort(gen.choice(shadow.out_idx, size=k, replace=False))
        for idx, label in ((in_idx, 1), (out_idx, 0)):
            rows.append(featurizer(shadow.model, population.features[idx], population.labels[idx]))
            labels.append(np.full(k, label))
    return LabeledDataset(np.vstack(rows), np.concatenate(labels), 2)


def fit_attack_classifier(attack_data: LabeledDataset, config: TrainConfig) -> AttackClassifier:
    """Standardizes the attack features and fits logistic regression on them."""
    mean = attack_data.features.mean(axis=0)
    scale = attack_data.features.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    z = LabeledDataset((attack_data.features - mean) / scale, attack_data.labels, 2)
    init = models.init_mlp([attack_data.n_features, 2], config.seed)
    model, _, _ = models.train(init, z, config)
    return AttackClassifier(model, mean, scale)


def train_attack(
    population: LabeledDataset,
    cfg: ShadowConfig,
    featurizer: Featurizer = prediction_features,
    shadows: Optional[Sequence[Shadow]] = None,
    threads: int = 1,
) -> AttackClassifier:
    """Shadow training, attack-set construction and classifier fit, from population data only."""
    if shadows is None:
        shadows = train_shadow_models(population, cfg, threads)
    attack_data = build_attack_dataset(shadows, population, cfg.seed, featurizer)
    return fit_attack_classifier(attack_data, cfg.attack_train_config)


def _shadow_pipeline(target, dataset, split, cfg, featurizer, name, shadows, threads):
    _check_compatible(target, dataset, split)
    if cfg.shadow_model_layers[-1] != target.num_classes:
        raise ArchitectureMismatch(
            f"shadow output size {cfg.shadow_model_layers[-1]} != target's {target.num_classes}"
        )
    population = dataset.subset(split.population_idx)
    classifier = train_attack(population, cfg, featurizer, shadows, threads)
    ids = split.audited_idx()
    feats = featurizer(target, dataset.features[ids], dataset.labels[ids])
    return _records(split, dataset, classifier.membership_probability(feats), name)


def shadow_attack(
    target: MlpModel,
    dataset: LabeledDataset,
    split: AuditSplit,
    cfg: ShadowConfig,
    shadows: Optional[Sequence[Shadow]] = None,
    threads: int = 1,
) -> list[AttackRecord]:
    """Black-box shadow-model attack on prediction vectors.

    Args:
      target: The audited model (queried for predictions only).
      dataset: Parent dataset; only ``split.population_idx`` rows are used
        to train the attacker.
      split: Audit split.
      cfg: Shadow attacker configuration.
      shadows: Pre-trained shadows on ``dataset.subset(split.population_idx)``
        to reuse; trained from ``cfg`` when omitted.
      threads: Parallel shadow trainings.

    Returns:
      One record per member / non-member, ascending id, score in [0, 1].
    """
    return _shadow_pipeline(
        target, dataset, split, cfg, prediction_features, SHADOW_BLACKBOX, shadows, threads
    )


def whitebox_attack(
    target: MlpModel,
    dataset: LabeledDataset,
    split: AuditSplit,
    cfg: ShadowConfig,
    shadows: Optional[Sequence[Shadow]] = None,
    threads: int = 1,
) -> list[AttackRecord]:
    """Shadow-model attack on loss, gradient-norm and confidence features.

    Shadows must share the target's architecture so the gradient features
    line up.
    """
    if tuple(cfg.shadow_model_layers) != tuple(target.layer_sizes):
        raise ArchitectureMismatch(
            f"white-box attack needs shadow layers == target layers, got "
            f"{cfg.shadow_model_layers} vs {target.layer_sizes}"
        )
    return _shadow_pipeline(
        target, dataset, split, cfg, whitebox_feature_matrix, SHADOW_WHITEBOX, shadows, threads
    )


def run_attacks(target, dataset, split, attack_names, shadow_config=None, threads=1):
    """Runs the named attacks against ``target``; returns {name: records} in canonical order.

    When both shadow attacks are requested and the shadow architecture
    equals the target's, the shadows are trained once and shared.
    """
    names = [n for n in ATTACK_ORDER if n in set(attack_names)]
    unknown = set(attack_names) - set(ATTACK_ORDER)
    if unknown:
        raise InvalidArgument(f"unknown attacks {sorted(unknown)}")
    if not names:
        raise InvalidArgument("no attacks requested")
    needs_shadows = [n for n in names if n != POPULATION_LOSS]
    if needs_shadows and shadow_config is None:
        raise InvalidArgument(f"{needs_shadows} need a shadow configuration")
    shadows = None
    if len(needs_shadows) == 2 and tuple(shadow_config.shadow_model_layers) == tuple(target.layer_sizes):
        shadows = train_shadow_models(
            dataset.subset(split.population_idx), shadow_config, threads
        )
    out = {}
    for name in names:
        if name == POPULATION_LOSS:
            out[name] = population_loss_attack(target, dataset, split)
        elif name == SHADOW_BLACKBOX:
            out[name] = shadow_attack(
                target, dataset, split, shadow_config, shadows, threads
            )
        else:
            out[name] = whitebox_attack(
                target, dataset, split, shadow_config, shadows, threads
            )
    return out
