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
# # Which records and classes are most exposed?
#
# Aggregate AUC hides the fact that risk is uneven. We train a three-class
# model on overlapping blobs and look at the per-class curves and at the
# records with the highest risk scores.

# %%
import numpy as np

from leakaudit import attacks, datasets, metrics, models
from leakaudit.models import TrainConfig

data = datasets.generate_synthetic(80, 2, 3, 1.0, seed=4)
split = datasets.make_audit_split(data, 45, 90, seed=4)
members = data.subset(split.member_idx)
target, _ = models.train_sgd(models.init_mlp([2, 32, 32, 3], 4), members,
                             TrainConfig(learning_rate=0.1, epochs=800, batch_size=9, seed=4))
records = attacks.population_loss_attack(target, data, split)
print(f"overall AUC {metrics.auc(records):.3f}")

# %%
curves, skipped = metrics.per_class_rocs(records)
for c, curve in curves.items():
    print(f"class {c}: {curve.n_members:2d} members, {curve.n_nonmembers:2d} non-members, "
          f"AUC {curve.auc:.3f}")
print("skipped classes:", skipped)

# %% [markdown]
# Risk scores are the smoothed fraction of members in each score bin. The
# highest-risk records are the ones an auditor would look at first. With
# twice as many non-members as members, even the riskiest bin stays below
# 0.5; what matters is how far it sits above the base rate of 1/3.

# %%
risks = metrics.risk_scores(records)
by_id = {r.record_id: r for r in records}
top = sorted(risks, key=lambda r: (-r.risk, r.record_id))[:8]
for r in top:
    rec = by_id[r.record_id]
    print(f"record {r.record_id:3d}  class {rec.class_label}  member {rec.is_member!s:5}  "
          f"risk {r.risk:.3f}  score {rec.score:9.4f}")
member_risk = np.mean([r.risk for r in risks if by_id[r.record_id].is_member])
other_risk = np.mean([r.risk for r in risks if not by_id[r.record_id].is_member])
print(f"mean risk: members {member_risk:.3f}, non-members {other_risk:.3f}")
