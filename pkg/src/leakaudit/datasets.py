"""Labeled tabular data and the member / non-member / population split."""

from __future__ import annotations

import dataclasses
import math
import os
from typing import Optional, Sequence

import numpy as np

from leakaudit import rng as rng_lib
from leakaudit.errors import AuditIOError, InvalidArgument, ParseError, SchemaError


@dataclasses.dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix plus integer class labels.

    Attributes:
      features: float64 array of shape (n_records, n_features).
      labels: int64 array of shape (n_records,), values in [0, num_classes).
      num_classes: Number of classes.
      feature_names: Optional column names, one per feature.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    feature_names: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if features.ndim != 2:
            raise InvalidArgument(f"features must be 2-D, got shape {features.shape}")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise InvalidArgument(
                f"labels shape {labels.shape} does not match {features.shape[0]} rows"
            )
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise InvalidArgument("labels must be integers")
        labels = labels.astype(np.int64)
        if self.num_classes < 1:
            raise InvalidArgument("num_classes must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise InvalidArgument(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(features)):
            raise InvalidArgument("features contain NaN or infinite values")
        names = self.feature_names
        if names is not None:
            names = tuple(str(n) for n in names)
            if len(names) != features.shape[1]:
                raise InvalidArgument("feature_names length differs from n_features")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "num_classes", int(self.num_classes))
        object.__setattr__(self, "feature_names", names)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        """Rows ``idx`` as a new dataset; class count and names are kept."""
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(
            self.features[idx], self.labels[idx], self.num_classes, self.feature_names
        )

    def standardized(self) -> "LabeledDataset":
        """Per-feature zero mean / unit variance copy (constant columns left centered)."""
        mean = self.features.mean(axis=0)
        std = self.features.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return LabeledDataset(
            (self.features - mean) / std, self.labels, self.num_classes, self.feature_names
        )


@dataclasses.dataclass(frozen=True, eq=False)
class AuditSplit:
    """Disjoint index sets defining the membership game.

    ``member_idx`` trains the target, ``nonmember_idx`` is held out, and
    ``population_idx`` is what a shadow-model attacker may draw from.
    """

    member_idx: np.ndarray
    nonmember_idx: np.ndarray
    population_idx: np.ndarray
    seed: int = 0

    def __post_init__(self):
        for name in ("member_idx", "nonmember_idx", "population_idx"):
            arr = np.array(getattr(self, name), dtype=np.int64).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.member_idx.size == 0 or self.nonmember_idx.size == 0:
            raise InvalidArgument("member and non-member sets must be nonempty")
        pooled = np.concatenate([self.member_idx, self.nonmember_idx, self.population_idx])
        if np.unique(pooled).size != pooled.size:
            raise InvalidArgument("split index sets must be pairwise disjoint")
        if pooled.min() < 0:
            raise InvalidArgument("split indices must be nonnegative")

    def audited_idx(self) -> np.ndarray:
        """Members and non-members, ascending."""
        return np.sort(np.concatenate([self.member_idx, self.nonmember_idx]))

    def check_against(self, dataset: LabeledDataset):
        pooled = np.concatenate([self.member_idx, self.nonmember_idx, self.population_idx])
        if pooled.size and pooled.max() >= len(dataset):
            raise InvalidArgument(
                f"split index {pooled.max()} out of range for {len(dataset)} records"
            )


def class_means(n_features: int, num_classes: int, class_separation: float) -> np.ndarray:
    """Class centers on the coordinate axes.

    Class ``c`` sits on axis ``c mod d`` at distance proportional to
    ``1 + c // d``. For ``num_classes <= n_features`` every pair of centers,
    in particular every consecutive pair, is exactly ``class_separation``
    apart; with a single feature the centers lie on a line with that spacing.
    """
    d = n_features
    scale = class_separation if d == 1 else class_separation / math.sqrt(2.0)
    means = np.zeros((num_classes, d))
    for c in range(num_classes):
        means[c, c % d] = scale * (1 + c // d)
    return means


def generate_synthetic(
    n_per_class: int,
    n_features: int,
    num_classes: int,
    class_separation: float,
    seed: int,
) -> LabeledDataset:
    """Gaussian blobs, one unit-variance blob per class.

    Records are emitted class by class (all of class 0 first). Identical
    arguments produce bit-identical datasets.
    """
    for name, value in (
        ("n_per_class", n_per_class),
        ("n_features", n_features),
        ("num_classes", num_classes),
    ):
        if int(value) != value or value <= 0:
            raise InvalidArgument(f"{name} must be a positive integer, got {value}")
    if num_classes < 2:
        raise InvalidArgument("num_classes must be at least 2")
    if not (class_separation >= 0 and math.isfinite(class_separation)):
        raise InvalidArgument(f"class_separation must be >= 0, got {class_separation}")
    gen = rng_lib.make_rng(seed)
    means = class_means(n_features, num_classes, float(class_separation))
    noise = gen.standard_normal((num_classes, n_per_class, n_features))
    features = (noise + means[:, None, :]).reshape(-1, n_features)
    labels = np.repeat(np.arange(num_classes), n_per_class)
    return LabeledDataset(features, labels, num_classes)


def load_csv(path, label_column: str, standardize: bool = False) -> LabeledDataset:
    """Reads a header-first, comma-separated numeric table.

    Labels may be arbitrary strings; they are mapped to 0..C-1 in order of
    first appearance. Quoting is not supported, so a row whose cell count
    differs from the header (e.g. a cell containing a comma) is rejected.

    Args:
      path: File to read (UTF-8).
      label_column: Header name of the label column.
      standardize: If true, rescale each feature to zero mean, unit variance.

    Raises:
      AuditIOError: the file cannot be read.
      SchemaError: missing label column, no header, or no data rows.
      ParseError: a malformed row or non-numeric feature cell.
    """
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8", newline="") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise AuditIOError(f"cannot read {path}: {e.strerror or e}", path=path) from e

    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise SchemaError(f"{path}: file is empty (no header row)")
    header = [h.strip() for h in lines[0].split(",")]
    if label_column not in header:
        raise SchemaError(f"{path}: label column {label_column!r} not in header {header}")
    if len(set(header)) != len(header):
        raise SchemaError(f"{path}: duplicate column names in header")
    label_pos = header.index(label_column)
    feature_cols = [i for i in range(len(header)) if i != label_pos]
    rows = lines[1:]
    if not rows:
        raise SchemaError(f"{path}: no data rows")

    mapping: dict[str, int] = {}
    labels = np.empty(len(rows), dtype=np.int64)
    features = np.empty((len(rows), len(feature_cols)), dtype=np.float64)
    for r, line in enumerate(rows, start=1):
        cells = line.split(",")
        if len(cells) != len(header):
            raise ParseError(
                f"{path}: row {r} (line {r + 1}) has {len(cells)} cells, "
                f"expected {len(header)}",
                row=r,
            )
        raw_label = cells[label_pos].strip()
        labels[r - 1] = mapping.setdefault(raw_label, len(mapping))
        for j, col in enumerate(feature_cols):
            cell = cells[col].strip()
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: row {r} (line {r + 1}), column {header[col]!r}: "
                    f"cannot parse {cell!r} as a number",
                    row=r,
                    column=header[col],
                ) from None
            if not math.isfinite(value):
                raise ParseError(
                    f"{path}: row {r} (line {r + 1}), column {header[col]!r}: "
                    f"non-finite value {cell!r}",
                    row=r,
                    column=header[col],
                )
            features[r - 1, j] = value

    dataset = LabeledDataset(
        features, labels, max(len(mapping), 1), tuple(header[i] for i in feature_cols)
    )
    return dataset.standardized() if standardize else dataset


def write_csv(dataset: LabeledDataset, path, label_column: str = "label",
              class_names: Optional[Sequence[str]] = None):
    """Writes ``dataset`` in the format read by :func:`load_csv`.

    Floats use 17 significant digits so a reload is exact.
    """
    names = dataset.feature_names or tuple(f"x{i}" for i in range(dataset.n_features))
    if label_column in names:
        raise InvalidArgument(f"label column {label_column!r} clashes with a feature name")
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(",".join([*names, label_column]) + "\n")
        for x, y in zip(dataset.features, dataset.labels):
            label = class_names[y] if class_names is not None else str(int(y))
            f.write(",".join([*(format(v, ".17g") for v in x), label]) + "\n")


def make_audit_split(
    dataset: LabeledDataset, n_members: int, n_nonmembers: int, seed: int
) -> AuditSplit:
    """Random disjoint split; leftover records become the attacker's population."""
    n = len(dataset)
    if n_members <= 0 or n_nonmembers <= 0:
        raise InvalidArgument("n_members and n_nonmembers must be positive")
    if n_members + n_nonmembers > n:
        raise InvalidArgument(
            f"requested {n_members} members + {n_nonmembers} non-members "
            f"but the dataset has only {n} records"
        )
    perm = rng_lib.make_rng(seed).permutation(n)
    return AuditSplit(
        member_idx=np.sort(perm[:n_members]),
        nonmember_idx=np.sort(perm[n_members:n_members + n_nonmembers]),
        population_idx=np.sort(perm[n_members + n_nonmembers:]),
        seed=rng_lib.check_seed(seed),
    )
