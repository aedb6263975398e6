"""Assembles attack outcomes into a privacy report and writes it to disk.

Written files (``emit``):

* ``report.json``: the whole report.
* ``roc_<attack>.csv``: ``fpr,tpr`` sweep points.
* ``risks_<attack>.csv``: ``record_id,class,is_member,score,risk``.
* ``histogram_<attack>.csv``: ``bin_lo,bin_hi,members,nonmembers``.
* ``sweep.csv``: privacy/utility sweep, when the report has one.
"""

from __future__ import annotations

import dataclasses
import datetime
import hashlib
import json
import os
import tempfile
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from leakaudit import __version__, metrics, models
from leakaudit import accountant as accountant_lib
from leakaudit.attacks import ATTACK_ORDER, AttackRecord
from leakaudit.datasets import LabeledDataset
from leakaudit.errors import AuditIOError, InconsistentInputs, InvalidArgument
from leakaudit.rng import PRNG_VERSION

SCHEMA_VERSION = 1


@dataclasses.dataclass(frozen=True, eq=False)
class AttackBlock:
    attack_name: str
    roc: metrics.RocCurve
    auc: float
    tpr_at_fpr: dict[float, float]
    membership_advantage: float
    per_class_auc: dict[int, float]
    per_class_roc: dict[int, metrics.RocCurve]
    skipped_classes: list[int]
    member_histogram: np.ndarray
    nonmember_histogram: np.ndarray
    bin_edges: np.ndarray
    records: list[AttackRecord]
    risks: list[metrics.RiskScore]

    def to_dict(self) -> dict:
        risk_by_id = {r.record_id: r.risk for r in self.risks}
        return {
            "attack_name": self.attack_name,
            "auc": self.auc,
            "tpr_at_fpr": {_fmt_key(k): v for k, v in self.tpr_at_fpr.items()},
            "membership_advantage": self.membership_advantage,
            "n_members": self.roc.n_members,
            "n_nonmembers": self.roc.n_nonmembers,
            "roc": {"fpr": self.roc.fpr.tolist(), "tpr": self.roc.tpr.tolist()},
            "per_class_auc": {str(c): a for c, a in self.per_class_auc.items()},
            "per_class_roc": {
                str(c): {"fpr": r.fpr.tolist(), "tpr": r.tpr.tolist()}
                for c, r in self.per_class_roc.items()
            },
            "skipped_classes": list(self.skipped_classes),
            "histogram": {
                "bin_edges": self.bin_edges.tolist(),
                "members": self.member_histogram.tolist(),
                "nonmembers": self.nonmember_histogram.tolist(),
            },
            "records": [
                {
                    "record_id": r.record_id,
                    "class": r.class_label,
                    "is_member": r.is_member,
                    "score": r.score,
                    "risk": risk_by_id[r.record_id],
                }
                for r in self.records
            ],
        }


@dataclasses.dataclass(frozen=True, eq=False)
class PrivacyReport:
    """Aggregate and per-record audit results.

    ``attacks`` is ordered population_loss, shadow_blackbox, shadow_whitebox
    (whichever are present) and every block covers the same record ids.
    """

    meta: dict
    target: dict
    attacks: list[AttackBlock]
    epsilon: Optional[accountant_lib.EpsilonReport] = None
    sweep: Optional[list[accountant_lib.TradeoffRow]] = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "meta": dict(self.meta),
            "target": dict(self.target),
            "attacks": [b.to_dict() for b in self.attacks],
        }
        if self.epsilon is not None:
            out["epsilon"] = self.epsilon.to_dict()
        if self.sweep is not None:
            out["sweep"] = [row.to_dict() for row in self.sweep]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    def block(self, attack_name: str) -> AttackBlock:
        for b in self.attacks:
            if b.attack_name == attack_name:
                return b
        raise KeyError(attack_name)


def _fmt_key(x: float) -> str:
    return format(x, "g")


def config_digest(config: Optional[Mapping]) -> str:
    """sha256 of the canonical JSON form of ``config`` (empty mapping if None)."""
    text = json.dumps(config or {}, sort_keys=True, separators=(",", ":"), default=str)
    return "sha256:" + hashlib.sha256(text.encode("utf-8")).hexdigest()


def utc_timestamp() -> str:
    now = datetime.datetime.now(datetime.timezone.utc).replace(microsecond=0)
    return now.isoformat().replace("+00:00", "Z")


def summarize_target(
    model: models.MlpModel,
    train: LabeledDataset,
    test: LabeledDataset,
    config: Optional[models.TrainConfig] = None,
) -> dict:
    """Architecture, data sizes, utility and generalization gaps of the audited model."""
    train_acc, train_loss = models.evaluate(model, train)
    test_acc, test_loss = models.evaluate(model, test)
    out = {
        "layer_sizes": list(model.layer_sizes),
        "activation": model.activation,
        "train_size": len(train),
        "test_size": len(test),
        "train_accuracy": train_acc,
        "test_accuracy": test_acc,
        "train_loss": train_loss,
        "test_loss": test_loss,
        "loss_gap": test_loss - train_loss,
        "accuracy_gap": train_acc - test_acc,
    }
    if config is not None:
        out["train_config"] = config.to_dict()
    return out


def _attack_block(name, records, bins, fpr_points) -> AttackBlock:
    records = sorted(records, key=lambda r: r.record_id)
    roc = metrics.compute_roc(records)
    per_class, skipped = metrics.per_class_rocs(records)
    member_hist, nonmember_hist, edges = metrics.score_histograms(records, bins)
    return AttackBlock(
        attack_name=name,
        roc=roc,
        auc=roc.auc,
        tpr_at_fpr={float(f): metrics.tpr_at_fpr(roc, f) for f in fpr_points},
        membership_advantage=float(np.max(roc.tpr - roc.fpr)),
        per_class_auc={c: r.auc for c, r in per_class.items()},
        per_class_roc=per_class,
        skipped_classes=skipped,
        member_histogram=member_hist,
        nonmember_histogram=nonmember_hist,
        bin_edges=edges,
        records=records,
        risks=metrics.risk_scores(records, bins),
    )


def build_report(
    target: Mapping,
    attack_results: Mapping[str, Sequence[AttackRecord]],
    *,
    bins: int = metrics.DEFAULT_BINS,
    fpr_points: Sequence[float] = metrics.DEFAULT_FPR_POINTS,
    epsilon: Optional[accountant_lib.EpsilonReport] = None,
    sweep: Optional[Sequence[accountant_lib.TradeoffRow]] = None,
    config: Optional[Mapping] = None,
    timestamp: Optional[str] = None,
) -> PrivacyReport:
    """Computes every metric per attack and packages the report.

    Args:
      target: Target summary, e.g. from :func:`summarize_target`.
      attack_results: Attack name -> records. Names must be known attacks.
      bins: Histogram / risk-score bin count.
      fpr_points: FPR operating points for TPR reporting.
      epsilon: DP guarantee of the target, if it was trained with DP-SGD.
      sweep: Privacy/utility sweep rows, if one was run.
      config: Configuration the audit ran with (digested into ``meta``).
      timestamp: RFC 3339 UTC time; defaults to now.

    Raises:
      InconsistentInputs: attacks disagree on the audited ids or memberships.
    """
    if not attack_results:
        raise InvalidArgument("at least one attack result is required")
    unknown = set(attack_results) - set(ATTACK_ORDER)
    if unknown:
        raise InvalidArgument(f"unknown attack names {sorted(unknown)}")
    reference = None
    for name in ATTACK_ORDER:
        if name not in attack_results:
            continue
        ids = {(r.record_id, bool(r.is_member)) for r in attack_results[name]}
        if len(ids) != len(attack_results[name]):
            raise InconsistentInputs(f"{name}: duplicate record ids")
        if reference is None:
            reference = (name, ids)
        elif ids != reference[1]:
            raise InconsistentInputs(
                f"{name} and {reference[0]} cover different records or memberships"
            )
    blocks = [
        _attack_block(name, attack_results[name], bins, fpr_points)
        for name in ATTACK_ORDER
        if name in attack_results
    ]
    meta = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "prng_version": PRNG_VERSION,
        "init_scheme": models.INIT_SCHEME,
        "timestamp": timestamp or utc_timestamp(),
        "config_digest": config_digest(config),
        "bins": int(bins),
        "fpr_points": [float(f) for f in fpr_points],
    }
    if config is not None:
        meta["config"] = json.loads(json.dumps(config, default=str))
    return PrivacyReport(
        meta=meta,
        target=dict(target),
        attacks=blocks,
        epsilon=epsilon,
        sweep=list(sweep) if sweep is not None else None,
    )


def _atomic_write(directory: str, name: str, text: str):
    final = os.path.join(directory, name)
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=directory)
    except OSError as e:
        raise AuditIOError(f"cannot write {final}: {e.strerror or e}", path=final) from e
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, final)
    except OSError as e:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise AuditIOError(f"cannot write {final}: {e.strerror or e}", path=final) from e


def _roc_csv(curve) -> str:
    lines = ["fpr,tpr"]
    lines += [f"{x:.17g},{y:.17g}" for x, y in zip(curve.fpr, curve.tpr)]
    return "\n".join(lines) + "\n"


def _risks_csv(block: AttackBlock) -> str:
    risk_by_id = {r.record_id: r.risk for r in block.risks}
    lines = ["record_id,class,is_member,score,risk"]
    for r in block.records:
        lines.append(
            f"{r.record_id},{r.class_label},{int(r.is_member)},"
            f"{r.score:.17g},{risk_by_id[r.record_id]:.17g}"
        )
    return "\n".join(lines) + "\n"


def _histogram_csv(block: AttackBlock) -> str:
    lines = ["bin_lo,bin_hi,members,nonmembers"]
    edges = block.bin_edges
    for k in range(len(block.member_histogram)):
        lines.append(
            f"{edges[k]:.17g},{edges[k + 1]:.17g},"
            f"{int(block.member_histogram[k])},{int(block.nonmember_histogram[k])}"
        )
    return "\n".join(lines) + "\n"


def _sweep_csv(rows) -> str:
    header = accountant_lib.sweep_columns(rows)
    lines = [",".join(header)]
    for row in rows:
        values = [row.sigma, row.epsilon, row.test_accuracy]
        values += [row.attack_auc[h[len("auc_"):]] for h in header[3:-1]]
        values.append(row.loss_gap)
        lines.append(",".join(format(v, ".17g") for v in values))
    return "\n".join(lines) + "\n"


def emit(report: PrivacyReport, directory) -> list[str]:
    """Writes the report files into ``directory`` (created if missing).

    Each file is written to a temporary name and renamed into place.

    Returns:
      Manifest of written paths, relative to ``directory``.
    """
    directory = os.fspath(directory)
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as e:
        raise AuditIOError(f"cannot create {directory}: {e.strerror or e}", path=directory) from e
    files = [("report.json", report.to_json())]
    for block in report.attacks:
        name = block.attack_name
        files.append((f"roc_{name}.csv", _roc_csv(block.roc)))
        files.append((f"risks_{name}.csv", _risks_csv(block)))
        files.append((f"histogram_{name}.csv", _histogram_csv(block)))
    if report.sweep:
        files.append(("sweep.csv", _sweep_csv(report.sweep)))
    for name, text in files:
        _atomic_write(directory, name, text)
    return [name for name, _ in files]


def write_sweep(rows, directory) -> str:
    """Writes ``sweep.csv`` alone; returns its relative name."""
    directory = os.fspath(directory)
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as e:
        raise AuditIOError(f"cannot create {directory}: {e.strerror or e}", path=directory) from e
    _atomic_write(directory, "sweep.csv", _sweep_csv(rows))
    return "sweep.csv"
