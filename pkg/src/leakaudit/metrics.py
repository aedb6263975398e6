"""Leakage metrics computed from attack scores.

Every function here is rank- or bin-based over a list of
:class:`~leakaudit.attacks.AttackRecord`; none of them trains anything.
"""

from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np

from leakaudit.errors import DegenerateInput, InvalidArgument

DEFAULT_BINS = 10
DEFAULT_FPR_POINTS = (0.01, 0.05, 0.1)


@dataclasses.dataclass(frozen=True, eq=False)
class RocCurve:
    """Threshold-sweep ROC curve.

    ``fpr`` and ``tpr`` are parallel arrays starting at (0, 0) and ending at
    (1, 1); ``auc`` is their trapezoidal integral.
    """

    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    n_members: int
    n_nonmembers: int

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


@dataclasses.dataclass(frozen=True)
class RiskScore:
    record_id: int
    risk: float
    attack_name: str


def _scores_and_labels(records):
    scores = np.array([r.score for r in records], dtype=np.float64)
    members = np.array([bool(r.is_member) for r in records], dtype=bool)
    return scores, members


def roc_from_scores(scores, is_member) -> RocCurve:
    """ROC of the rule "member iff score >= threshold" over all distinct scores.

    Thresholds run over the distinct scores in descending order, so tied
    scores flip together and a tie group contributes one diagonal segment.
    """
    scores = np.asarray(scores, dtype=np.float64)
    is_member = np.asarray(is_member, dtype=bool)
    n_pos = int(is_member.sum())
    n_neg = int(is_member.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateInput(
            f"ROC needs members and non-members, got {n_pos} and {n_neg}"
        )
    if not np.all(np.isfinite(scores)):
        raise InvalidArgument("scores must be finite")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    m = is_member[order]
    tp = np.cumsum(m)
    fp = np.cumsum(~m)
    # last index of each tie group
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tpr = np.r_[0.0, tp[ends] / n_pos]
    fpr = np.r_[0.0, fp[ends] / n_neg]
    # The lowest threshold always yields (1, 1); append only if missing.
    if fpr[-1] != 1.0 or tpr[-1] != 1.0:
        fpr = np.r_[fpr, 1.0]
        tpr = np.r_[tpr, 1.0]
    area = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, area, n_pos, n_neg)


def compute_roc(records: Sequence) -> RocCurve:
    scores, members = _scores_and_labels(records)
    return roc_from_scores(scores, members)


def auc(records: Sequence) -> float:
    """Trapezoidal area under :func:`compute_roc`; 0.5 is chance, 1.0 perfect separation."""
    return compute_roc(records).auc


def tpr_at_fpr(curve: RocCurve, fpr_target: float) -> float:
    """Largest TPR among sweep points with FPR <= ``fpr_target`` (step function, no interpolation)."""
    if not 0.0 <= fpr_target <= 1.0:
        raise InvalidArgument(f"fpr_target must be in [0, 1], got {fpr_target}")
    return float(curve.tpr[curve.fpr <= fpr_target].max())


def membership_advantage(records: Sequence) -> float:
    """max over thresholds of TPR - FPR."""
    curve = compute_roc(records)
    return float(np.max(curve.tpr - curve.fpr))


def per_class_rocs(records: Sequence):
    """ROC per class label.

    Returns:
      ``(curves, skipped)``: a dict class -> RocCurve for classes that have
      both members and non-members, and the sorted list of classes that
      lack one side.
    """
    by_class: dict[int, list] = {}
    for r in records:
        by_class.setdefault(int(r.class_label), []).append(r)
    curves, skipped = {}, []
    for c in sorted(by_class):
        group = by_class[c]
        n_pos = sum(1 for r in group if r.is_member)
        if n_pos == 0 or n_pos == len(group):
            skipped.append(c)
        else:
            curves[c] = compute_roc(group)
    return curves, skipped


def _bin_index(scores, lo, hi, bins):
    if hi == lo:
        return np.zeros(scores.shape, dtype=np.int64)
    idx = np.floor((scores - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def score_histograms(records: Sequence, bins: int = DEFAULT_BINS):
    """Member and non-member score counts on shared equal-width bins.

    The bins span the pooled [min, max] score range; the top edge is
    inclusive. When every score is equal all records land in the first bin.

    Returns:
      ``(member_counts, nonmember_counts, edges)`` with ``len(edges) == bins + 1``.
    """
    if int(bins) != bins or bins < 1:
        raise InvalidArgument(f"bins must be a positive integer, got {bins}")
    bins = int(bins)
    scores, members = _scores_and_labels(records)
    if scores.size == 0:
        raise DegenerateInput("no records to histogram")
    lo, hi = float(scores.min()), float(scores.max())
    edges = np.linspace(lo, hi, bins + 1) if hi > lo else np.full(bins + 1, lo)
    idx = _bin_index(scores, lo, hi, bins)
    member_counts = np.bincount(idx[members], minlength=bins)
    nonmember_counts = np.bincount(idx[~members], minlength=bins)
    return member_counts, nonmember_counts, edges


def risk_scores(records: Sequence, bins: int = DEFAULT_BINS) -> list[RiskScore]:
    """Binned membership posterior with add-one smoothing, ordered by record id.

    A record whose score falls in a bin holding ``m`` members and ``n``
    non-members gets risk ``(m + 1) / (m + n + 2)``. If every score is the
    same the attack carries no information and every risk is 0.5.
    """
    records = list(records)
    if not records:
        return []
    if len({r.score for r in records}) == 1:
        return sorted(
            (RiskScore(int(r.record_id), 0.5, r.attack_name) for r in records),
            key=lambda rs: rs.record_id,
        )
    member_counts, nonmember_counts, _ = score_histograms(records, bins)
    scores, _ = _scores_and_labels(records)
    idx = _bin_index(scores, scores.min(), scores.max(), bins)
    posterior = (member_counts + 1.0) / (member_counts + nonmember_counts + 2.0)
    out = [
        RiskScore(int(r.record_id), float(posterior[i]), r.attack_name)
        for r, i in zip(records, idx)
    ]
    out.sort(key=lambda rs: rs.record_id)
    return out
