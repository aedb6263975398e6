import itertools

import numpy as np
import pytest

from leakaudit import models, scenarios
from leakaudit.attacks import AttackRecord


def central_difference(fn, arrays, step=1e-5):
    """Numerical gradient of scalar ``fn()`` w.r.t. each array in ``arrays`` (perturbed in place)."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = arr[i]
            arr[i] = orig + step
            up = fn()
            arr[i] = orig - step
            down = fn()
            arr[i] = orig
            g[i] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    a = np.concatenate([x.ravel() for x in analytic])
    n = np.concatenate([x.ravel() for x in numeric])
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def mutable_copy(model):
    return [w.copy() for w in model.weights], [b.copy() for b in model.biases]


def rebuild(model, weights, biases):
    return models.MlpModel(model.layer_sizes, tuple(weights), tuple(biases))


def make_records(member_scores, nonmember_scores, classes=None, name="population_loss"):
    out = []
    scores = [(s, True) for s in member_scores] + [(s, False) for s in nonmember_scores]
    for i, (s, m) in enumerate(scores):
        c = 0 if classes is None else classes[i]
        out.append(AttackRecord(i, m, float(s), c, name))
    return out


def pair_count_auc(member_scores, nonmember_scores):
    """Brute-force Mann-Whitney statistic with half credit for ties."""
    wins = ties = 0
    for m, n in itertools.product(member_scores, nonmember_scores):
        if m > n:
            wins += 1
        elif m == n:
            ties += 1
    return (wins + 0.5 * ties) / (len(member_scores) * len(nonmember_scores))


def random_problem(seed, max_sizes=(4, 8, 3), max_batch=8):
    rng = np.random.default_rng(seed)
    depth = rng.integers(2, len(max_sizes) + 1)
    sizes = [int(rng.integers(1, m + 1)) for m in max_sizes[:depth]]
    sizes[-1] = max(sizes[-1], 2)
    model = models.init_mlp(sizes, seed)
    model = rebuild(
        model,
        list(model.weights),
        [rng.normal(0, 0.5, size=b.shape) for b in model.biases],
    )
    n = int(rng.integers(1, max_batch + 1))
    x = rng.normal(size=(n, sizes[0]))
    y = rng.integers(0, sizes[-1], size=n)
    return model, x, y


@pytest.fixture(scope="session")
def overfit():
    """The canonical high-generalization-gap target (seed 0) and its scenario."""
    scenario = scenarios.overfit_scenario(seed=0)
    model, history = models.train_sgd(
        scenario.untrained_target(), scenario.members, scenario.train_config
    )
    return scenario, model, history


_AUDITS = {}


def overfit_audit(seed, trained=True):
    """Cached ``(target, records by attack)`` for the overfit scenario at ``seed``."""
    key = (seed, trained)
    if key not in _AUDITS:
        _AUDITS[key] = scenarios.attack_scenario(scenarios.overfit_scenario(seed), trained)
    return _AUDITS[key]


_SWEEPS = {}
SWEEP_SIGMAS = (0.1, 1.0, 8.0)


def overfit_sweep(seed, attack_names=("population_loss",)):
    """Cached DP sweep over ``SWEEP_SIGMAS`` on the overfit scenario at ``seed``."""
    from leakaudit import accountant

    key = (seed, tuple(attack_names))
    if key not in _SWEEPS:
        scenario = scenarios.overfit_scenario(seed)
        _SWEEPS[key] = accountant.sweep_tradeoff(
            scenario.dataset, scenario.split, scenario.layer_sizes,
            scenarios.dp_sweep_config(seed), SWEEP_SIGMAS, attack_names,
            scenario.shadow_config,
        )
    return _SWEEPS[key]
