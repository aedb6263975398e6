"""Epsilon accounting for DP-SGD and the privacy/utility sweep.

The bound composes ``T`` Gaussian-mechanism steps in zero-concentrated DP
and converts to (epsilon, delta)-DP::

    rho = T / (2 sigma^2)
    epsilon = rho + 2 sqrt(rho ln(1 / delta))

Clipping makes each step's L2 sensitivity equal to the clip norm and the
noise scale is ``sigma * clip_norm``, so the clip norm cancels. Poisson or
shuffling amplification is not used; the bound over-states epsilon for
mini-batch training and says so in ``method``.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent import futures
from typing import Optional, Sequence

from leakaudit import attacks as attacks_lib
from leakaudit import metrics, models
from leakaudit import rng as rng_lib
from leakaudit.datasets import AuditSplit, LabeledDataset
from leakaudit.errors import InvalidArgument
from leakaudit.models import TrainConfig

METHOD = "zcdp-no-subsampling"


@dataclasses.dataclass(frozen=True)
class EpsilonReport:
    epsilon: float
    delta: float
    rho: float
    sigma: float
    steps: int
    method: str = METHOD

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def epsilon_of(sigma: float, steps: int, delta: float) -> EpsilonReport:
    """(epsilon, delta) guarantee of ``steps`` Gaussian steps with noise multiplier ``sigma``."""
    if int(steps) != steps or steps < 0:
        raise InvalidArgument(f"steps must be a nonnegative integer, got {steps}")
    if not 0.0 < delta < 1.0:
        raise InvalidArgument(f"delta must be in (0, 1), got {delta}")
    if steps > 0 and not sigma > 0:
        raise InvalidArgument(f"sigma must be > 0 when steps > 0, got {sigma}")
    if not sigma >= 0:
        raise InvalidArgument(f"sigma must be >= 0, got {sigma}")
    steps = int(steps)
    rho = 0.0 if steps == 0 else steps / (2.0 * sigma * sigma)
    eps = rho + 2.0 * math.sqrt(rho * math.log(1.0 / delta))
    return EpsilonReport(eps, delta, rho, float(sigma), steps)


@dataclasses.dataclass(frozen=True)
class TradeoffRow:
    sigma: float
    epsilon: float
    test_accuracy: float
    attack_auc: dict
    loss_gap: float
    steps: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _sweep_point(i, sigma, dataset, split, layer_sizes, base_config, attack_names,
                 shadow_config):
    seed = rng_lib.derive_seed(base_config.seed, i)
    config = dataclasses.replace(
        base_config,
        seed=seed,
        dp=dataclasses.replace(base_config.dp, noise_multiplier=float(sigma)),
    )
    init = models.init_mlp(layer_sizes, rng_lib.derive_seed(seed, 0))
    members = dataset.subset(split.member_idx)
    nonmembers = dataset.subset(split.nonmember_idx)
    target, _, steps = models.train_dp_sgd(init, members, config)
    test_acc, _ = models.evaluate(target, nonmembers)
    loss_gap, _ = models.generalization_gap(target, members, nonmembers)
    results = attacks_lib.run_attacks(target, dataset, split, attack_names, shadow_config)
    eps = epsilon_of(sigma, steps, config.dp.delta)
    return TradeoffRow(
        sigma=float(sigma),
        epsilon=eps.epsilon,
        test_accuracy=test_acc,
        attack_auc={name: metrics.auc(recs) for name, recs in results.items()},
        loss_gap=loss_gap,
        steps=steps,
    )


def sweep_tradeoff(
    dataset: LabeledDataset,
    split: AuditSplit,
    layer_sizes: Sequence[int],
    base_config: TrainConfig,
    sigmas: Sequence[float],
    attack_names: Sequence[str] = (attacks_lib.POPULATION_LOSS,),
    shadow_config: Optional[attacks_lib.ShadowConfig] = None,
    threads: int = 1,
) -> list[TradeoffRow]:
    """Trains one DP-SGD target per noise multiplier and audits each.

    Every row trains from its own seed derived from ``(base_config.seed,
    row index)``. Utility is accuracy on the non-members; epsilon uses the
    clip norm and delta of ``base_config.dp``.

    Args:
      dataset: Parent dataset.
      split: Members train each target; non-members measure utility and
        serve as the attacks' negatives.
      layer_sizes: Target architecture.
      base_config: Training recipe; must carry ``dp`` (its noise multiplier
        is replaced per row).
      sigmas: Strictly increasing positive noise multipliers.
      attack_names: Attacks to run at each point.
      shadow_config: Needed for the shadow attacks. The attacker's shadows
        are trained without DP, as an attacker would.
      threads: Sweep points trained concurrently.

    Returns:
      One :class:`TradeoffRow` per sigma, in input order.
    """
    sigmas = [float(s) for s in sigmas]
    if not sigmas:
        raise InvalidArgument("sigmas must be nonempty")
    if any(s <= 0 for s in sigmas):
        raise InvalidArgument("sigmas must be positive")
    if any(b <= a for a, b in zip(sigmas, sigmas[1:])):
        raise InvalidArgument("sigmas must be strictly increasing")
    if base_config.dp is None:
        raise InvalidArgument("base_config needs DP parameters (clip_norm, delta)")
    args = (dataset, split, layer_sizes, base_config, list(attack_names), shadow_config)
    if threads <= 1:
        return [_sweep_point(i, s, *args) for i, s in enumerate(sigmas)]
    with futures.ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda p: _sweep_point(p[0], p[1], *args), enumerate(sigmas)))


def sweep_columns(rows: Sequence[TradeoffRow]) -> list[str]:
    names = []
    for row in rows:
        names.extend(n for n in row.attack_auc if n not in names)
    ordered = [n for n in attacks_lib.ATTACK_ORDER if n in names]
    return ["sigma", "epsilon", "test_accuracy", *(f"auc_{n}" for n in ordered), "loss_gap"]
