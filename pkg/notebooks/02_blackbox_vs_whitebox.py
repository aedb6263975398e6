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
# # How much does access matter?
#
# Three attackers look at the same overfit target:
#
# * `population_loss` knows the loss of each record.
# * `shadow_blackbox` sees only the prediction vector and learns what
#   membership looks like from shadow models trained on population data.
# * `shadow_whitebox` also sees the parameters, through per-layer gradient
#   norms, loss and confidence.
#
# No ordering between them is guaranteed; we just put the numbers side by side.

# %%
import numpy as np

from leakaudit import attacks, metrics, scenarios

rows = []
for seed in range(2):
    _, results = scenarios.attack_scenario(scenarios.overfit_scenario(seed))
    rows.append([metrics.auc(results[name]) for name in attacks.ATTACK_ORDER])
rows = np.array(rows)

print("seed  " + "  ".join(f"{name:>16}" for name in attacks.ATTACK_ORDER))
for seed, row in enumerate(rows):
    print(f"{seed:>4}  " + "  ".join(f"{v:16.3f}" for v in row))
print("mean  " + "  ".join(f"{v:16.3f}" for v in rows.mean(axis=0)))

# %% [markdown]
# Sorting the prediction vector hides which class was predicted, so the
# black-box classifier must infer correctness from the one-hot label and the
# top probability jointly. The white-box features include the true-class
# probability directly, which is why they usually recover the loss attack's
# strength.

# %%
scenario = scenarios.overfit_scenario(0)
target = scenario.train_target()
feats = attacks.whitebox_feature_matrix(
    target, scenario.dataset.features, scenario.dataset.labels
)
n_layers = len(target.weights)
for label, idx in (("members", scenario.split.member_idx),
                   ("non-members", scenario.split.nonmember_idx)):
    f = feats[idx]
    print(f"{label:>11}: median loss {np.median(f[:, 0]):.2e}  "
          f"median grad norms {np.round(np.median(f[:, 1:1 + n_layers], axis=0), 4)}")
