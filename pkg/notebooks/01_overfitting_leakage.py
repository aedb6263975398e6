# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: percent
#       format_version: '1.3'
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Overfitting and membership leakage
#
# A network that memorizes its 30 training records assigns them much lower
# loss than records it never saw. The loss attack turns that difference into
# a membership score. Here we compare an untrained network with the same
# network after training until its training loss is near zero.

# %%
import numpy as np

from leakaudit import attacks, metrics, models, scenarios

scenario = scenarios.overfit_scenario(seed=1)
untrained = scenario.untrained_target()
trained, history = models.train_sgd(untrained, scenario.members, scenario.train_config)
print(f"final training loss {history.loss[-1]:.2e}")

# %%
for label, model in (("untrained", untrained), ("trained", trained)):
    loss_gap, acc_gap = models.generalization_gap(model, scenario.members, scenario.nonmembers)
    records = attacks.population_loss_attack(model, scenario.dataset, scenario.split)
    print(f"{label:>9}: loss gap {loss_gap:7.3f}  accuracy gap {acc_gap:6.3f}  "
          f"loss-attack AUC {metrics.auc(records):.3f}")

# %% [markdown]
# The score histograms show where the separation comes from: members pile up
# in the top bin (loss close to zero) while non-members spread out.

# %%
records = attacks.population_loss_attack(trained, scenario.dataset, scenario.split)
m, n, edges = metrics.score_histograms(records, bins=8)
for k in range(len(m)):
    print(f"[{edges[k]:9.3f}, {edges[k + 1]:9.3f}]  members {'#' * m[k]:<30} non {'#' * n[k]}")

# %% [markdown]
# The TPR at small FPR says how many members an attacker could flag while
# rarely accusing a non-member.

# %%
curve = metrics.compute_roc(records)
for target in metrics.DEFAULT_FPR_POINTS:
    print(f"TPR at FPR <= {target:<4}: {metrics.tpr_at_fpr(curve, target):.3f}")
print(f"membership advantage {metrics.membership_advantage(records):.3f}")
print("training curve (every 200 epochs):", np.round(history.loss[::200], 4))
