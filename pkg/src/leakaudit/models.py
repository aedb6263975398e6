"""Rectifier MLPs with a softmax head, trained by SGD or DP-SGD.

The same model type serves as the audited target, as shadow models, and
(with no hidden layer, i.e. multinomial logistic regression) as the attack
classifier. Weight matrices are stored as (fan_out, fan_in).
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from leakaudit import rng as rng_lib
from leakaudit.datasets import LabeledDataset
from leakaudit.errors import (
    AuditError,
    AuditIOError,
    EmptySubset,
    InvalidArgument,
    InvalidLabel,
    SchemaError,
    ShapeMismatch,
)

INIT_SCHEME = "gaussian(0, sqrt(2/fan_in)), zero bias"


@dataclasses.dataclass(frozen=True, eq=False)
class MlpModel:
    """Parameters of a feed-forward classifier.

    Attributes:
      layer_sizes: ``(d, h_1, ..., C)``.
      weights: One (layer_sizes[k+1], layer_sizes[k]) matrix per layer.
      biases: One length layer_sizes[k+1] vector per layer.
      activation: Hidden-layer nonlinearity; only ``"relu"`` is supported.
    """

    layer_sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: str = "relu"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or min(sizes) <= 0:
            raise InvalidArgument(f"layer_sizes needs >= 2 positive sizes, got {sizes}")
        if self.activation != "relu":
            raise InvalidArgument(f"unsupported activation {self.activation!r}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ShapeMismatch("need one weight matrix and bias per layer")
        weights, biases = [], []
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.array(w, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if w.shape != (sizes[k + 1], sizes[k]) or b.shape != (sizes[k + 1],):
                raise ShapeMismatch(
                    f"layer {k}: got weight {w.shape} / bias {b.shape}, expected "
                    f"{(sizes[k + 1], sizes[k])} / {(sizes[k + 1],)}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise AuditError(f"layer {k} has non-finite parameters")
            w.setflags(write=False)
            b.setflags(write=False)
            weights.append(w)
            biases.append(b)
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", tuple(weights))
        object.__setattr__(self, "biases", tuple(biases))

    @property
    def num_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def num_layers(self) -> int:
        return len(self.weights)


class Gradients(NamedTuple):
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in (*self.weights, *self.biases)])

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(a * a) for a in (*self.weights, *self.biases))))


@dataclasses.dataclass(frozen=True)
class DpParams:
    """DP-SGD mechanism parameters.

    ``clip_norm`` may be ``math.inf`` to disable clipping, which is only
    meaningful together with ``noise_multiplier == 0``.
    """

    clip_norm: float
    noise_multiplier: float
    delta: float = 1e-5

    def __post_init__(self):
        if not self.clip_norm > 0:
            raise InvalidArgument(f"clip_norm must be > 0, got {self.clip_norm}")
        if not (self.noise_multiplier >= 0 and math.isfinite(self.noise_multiplier)):
            raise InvalidArgument(
                f"noise_multiplier must be finite and >= 0, got {self.noise_multiplier}"
            )
        if not 0 < self.delta < 1:
            raise InvalidArgument(f"delta must be in (0, 1), got {self.delta}")
        if math.isinf(self.clip_norm) and self.noise_multiplier > 0:
            raise InvalidArgument("noise requires a finite clip_norm")


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int
    l2_coefficient: float = 0.0
    seed: int = 0
    dp: Optional[DpParams] = None

    def __post_init__(self):
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise InvalidArgument(f"learning_rate must be > 0, got {self.learning_rate}")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise InvalidArgument(f"epochs must be a positive integer, got {self.epochs}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise InvalidArgument(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.l2_coefficient >= 0:
            raise InvalidArgument("l2_coefficient must be >= 0")
        rng_lib.check_seed(self.seed)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if self.dp is not None and math.isinf(self.dp.clip_norm):
            out["dp"]["clip_norm"] = "inf"
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        dp = d.pop("dp", None)
        if dp is not None:
            dp = dict(dp)
            if dp.get("clip_norm") in ("inf", "Infinity"):
                dp["clip_norm"] = math.inf
            dp = DpParams(**dp)
        return cls(**d, dp=dp)


@dataclasses.dataclass
class TrainHistory:
    """End-of-epoch loss (cross-entropy, no l2 term) and accuracy on the training data."""

    loss: list[float] = dataclasses.field(default_factory=list)
    accuracy: list[float] = dataclasses.field(default_factory=list)


def init_mlp(layer_sizes: Sequence[int], seed: int) -> MlpModel:
    """He-normal initialization: N(0, 2 / fan_in) weights, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or min(sizes) <= 0:
        raise InvalidArgument(f"layer_sizes needs >= 2 positive sizes, got {list(layer_sizes)}")
    gen = rng_lib.make_rng(seed)
    weights = [
        gen.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:])
    ]
    biases = [np.zeros(s) for s in sizes[1:]]
    return MlpModel(tuple(sizes), tuple(weights), tuple(biases))


def _check_batch(model, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.layer_sizes[0]:
        raise ShapeMismatch(
            f"batch of shape {x.shape} does not fit input size {model.layer_sizes[0]}"
        )
    return x


def _check_labels(model, labels, n) -> np.ndarray:
    y = np.asarray(labels).reshape(-1)
    if y.shape[0] != n:
        raise ShapeMismatch(f"{y.shape[0]} labels for {n} records")
    if y.size and (not np.all(y == np.round(y)) or y.min() < 0 or y.max() >= model.num_classes):
        raise InvalidLabel(f"labels must be integers in [0, {model.num_classes})")
    return y.astype(np.int64)


def _forward_pass(weights, biases, x):
    """Returns (layer inputs, logits); inputs[k] feeds weight matrix k."""
    inputs = [x]
    a = x
    last = len(weights) - 1
    for k, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w.T + b
        if k == last:
            return inputs, z
        a = np.maximum(z, 0.0)
        inputs.append(a)


def _log_softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: MlpModel, batch) -> np.ndarray:
    """Softmax class probabilities, one row per input record."""
    x = _check_batch(model, batch)
    _, logits = _forward_pass(model.weights, model.biases, x)
    return _softmax(logits)


def per_example_losses(model: MlpModel, features, labels) -> np.ndarray:
    """Cross-entropy of each record under ``model``."""
    x = _check_batch(model, features)
    y = _check_labels(model, labels, x.shape[0])
    _, logits = _forward_pass(model.weights, model.biases, x)
    return -_log_softmax(logits)[np.arange(x.shape[0]), y]


def _deltas(weights, inputs, logits, y):
    """Per-record gradients of each record's loss w.r.t. every layer's pre-activation."""
    delta = _softmax(logits)
    delta[np.arange(y.shape[0]), y] -= 1.0
    deltas = [delta]
    for k in range(len(weights) - 1, 0, -1):
        delta = (delta @ weights[k]) * (inputs[k] > 0)
        deltas.append(delta)
    deltas.reverse()
    return deltas


def _summed_grads(deltas, inputs, row_scale=None):
    if row_scale is not None:
        deltas = [d * row_scale[:, None] for d in deltas]
    return [d.T @ a for d, a in zip(deltas, inputs)], [d.sum(axis=0) for d in deltas]


def _per_example_norms(deltas, inputs) -> np.ndarray:
    # ||delta a^T||_F = ||delta|| * ||a||, so no per-record gradient is materialized.
    sq = np.zeros(deltas[0].shape[0])
    for d, a in zip(deltas, inputs):
        dd = np.sum(d * d, axis=1)
        sq += dd * np.sum(a * a, axis=1) + dd
    return np.sqrt(sq)


def loss_and_grads(model: MlpModel, features, labels, l2_coefficient: float = 0.0):
    """Mean cross-entropy (+ l2/2 * sum of squared weights) and its exact gradient.

    Returns:
      ``(loss, Gradients)`` with gradients shaped like the parameters.
    """
    x = _check_batch(model, features)
    y = _check_labels(model, labels, x.shape[0])
    if x.shape[0] == 0:
        raise EmptySubset("loss of an empty batch is undefined")
    inputs, logits = _forward_pass(model.weights, model.biases, x)
    n = x.shape[0]
    loss = -float(np.mean(_log_softmax(logits)[np.arange(n), y]))
    gw, gb = _summed_grads(_deltas(model.weights, inputs, logits, y), inputs)
    gw = [g / n for g in gw]
    gb = [g / n for g in gb]
    if l2_coefficient:
        loss += 0.5 * l2_coefficient * sum(float(np.sum(w * w)) for w in model.weights)
        gw = [g + l2_coefficient * w for g, w in zip(gw, model.weights)]
    return loss, Gradients(tuple(gw), tuple(gb))


def per_example_gradient(model: MlpModel, record, label) -> Gradients:
    """Gradient of a single record's cross-entropy (no l2, no averaging)."""
    x = np.asarray(record, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeMismatch(f"record must be 1-D, got shape {x.shape}")
    x = _check_batch(model, x)
    y = _check_labels(model, [label], 1)
    inputs, logits = _forward_pass(model.weights, model.biases, x)
    gw, gb = _summed_grads(_deltas(model.weights, inputs, logits, y), inputs)
    return Gradients(tuple(gw), tuple(gb))


def evaluate(model: MlpModel, data: LabeledDataset) -> tuple[float, float]:
    """``(accuracy, mean cross-entropy)``; argmax ties go to the lowest class index."""
    if len(data) == 0:
        raise EmptySubset("cannot evaluate on an empty subset")
    x = _check_batch(model, data.features)
    y = _check_labels(model, data.labels, x.shape[0])
    _, logits = _forward_pass(model.weights, model.biases, x)
    acc = float(np.mean(np.argmax(logits, axis=1) == y))
    loss = -float(np.mean(_log_softmax(logits)[np.arange(x.shape[0]), y]))
    return acc, loss


def generalization_gap(model: MlpModel, train: LabeledDataset, test: LabeledDataset):
    """``(test loss - train loss, train accuracy - test accuracy)``."""
    train_acc, train_loss = evaluate(model, train)
    test_acc, test_loss = evaluate(model, test)
    return test_loss - train_loss, train_acc - test_acc


def _train(model, data, config, dp, observer):
    if len(data) == 0:
        raise InvalidArgument("training data is empty")
    if data.n_features != model.layer_sizes[0] or data.num_classes > model.num_classes:
        raise ShapeMismatch(
            f"data ({data.n_features} features, {data.num_classes} classes) does not fit "
            f"model {model.layer_sizes}"
        )
    x, y = data.features, data.labels
    n = x.shape[0]
    shuffle_rng = rng_lib.make_rng(config.seed, 0)
    noise_rng = rng_lib.make_rng(config.seed, 1)
    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]
    lr, l2 = config.learning_rate, config.l2_coefficient
    history = TrainHistory()
    steps = 0

    for _ in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            inputs, logits = _forward_pass(weights, biases, x[idx])
            deltas = _deltas(weights, inputs, logits, y[idx])
            if dp is None:
                gw, gb = _summed_grads(deltas, inputs)
            else:
                norms = _per_example_norms(deltas, inputs)
                with np.errstate(divide="ignore"):
                    scale = np.minimum(1.0, dp.clip_norm / norms)
                if observer is not None:
                    observer(scale * norms)
                gw, gb = _summed_grads(deltas, inputs, scale)
                if dp.noise_multiplier > 0:
                    std = dp.noise_multiplier * dp.clip_norm
                    gw = [g + noise_rng.normal(0.0, std, size=g.shape) for g in gw]
                    gb = [g + noise_rng.normal(0.0, std, size=g.shape) for g in gb]
            m = idx.shape[0]
            for k in range(len(weights)):
                gwk = gw[k] / m
                if l2:
                    gwk = gwk + l2 * weights[k]
                weights[k] = weights[k] - lr * gwk
                biases[k] = biases[k] - lr * (gb[k] / m)
            steps += 1
        if not all(np.all(np.isfinite(w)) for w in weights):
            raise AuditError("training diverged (non-finite parameters); lower the learning rate")
        trained = MlpModel(model.layer_sizes, tuple(weights), tuple(biases))
        acc, loss = evaluate(trained, data)
        history.loss.append(loss)
        history.accuracy.append(acc)

    return MlpModel(model.layer_sizes, tuple(weights), tuple(biases)), history, steps


def train_sgd(model: MlpModel, data: LabeledDataset, config: TrainConfig):
    """Mini-batch SGD; reshuffles every epoch and keeps the final partial batch.

    Returns:
      ``(trained model, TrainHistory)``. The input model is not modified.
    """
    if config.dp is not None:
        raise InvalidArgument("config carries DP parameters; use train_dp_sgd")
    trained, history, _ = _train(model, data, config, None, None)
    return trained, history


def train_dp_sgd(
    model: MlpModel,
    data: LabeledDataset,
    config: TrainConfig,
    observer: Optional[Callable[[np.ndarray], None]] = None,
):
    """DP-SGD: clip each record's gradient to ``clip_norm``, sum, add noise, average.

    Noise with standard deviation ``noise_multiplier * clip_norm`` is added
    to every coordinate of the clipped sum before dividing by the batch size.
    The l2 penalty gradient is data-independent and is added unclipped.

    Args:
      model: Initial parameters.
      data: Training records.
      config: Must carry ``dp``.
      observer: Called once per step with the L2 norms of the clipped
        per-record gradients (for instrumentation and tests).

    Returns:
      ``(trained model, TrainHistory, steps_taken)`` where ``steps_taken =
      epochs * ceil(n / batch_size)``.
    """
    if config.dp is None:
        raise InvalidArgument("train_dp_sgd requires config.dp")
    return _train(model, data, config, config.dp, observer)


def model_to_dict(model: MlpModel, meta: Optional[dict] = None) -> dict:
    return {
        "layer_sizes": list(model.layer_sizes),
        # json writes floats with repr(), the shortest exactly round-tripping form.
        "weights": [w.ravel().tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "activation": model.activation,
        "meta": dict(meta or {}),
    }


def model_from_dict(d: dict) -> MlpModel:
    try:
        sizes = [int(s) for s in d["layer_sizes"]]
        weights = [
            np.asarray(w, dtype=np.float64).reshape(sizes[k + 1], sizes[k])
            for k, w in enumerate(d["weights"])
        ]
        biases = [np.asarray(b, dtype=np.float64) for b in d["biases"]]
        return MlpModel(tuple(sizes), tuple(weights), tuple(biases), d.get("activation", "relu"))
    except (KeyError, TypeError, ValueError, IndexError) as e:
        if isinstance(e, AuditError):
            raise
        raise SchemaError(f"malformed model document: {e}") from e


def save_model(model: MlpModel, path, meta: Optional[dict] = None):
    """Writes the JSON model file: layer_sizes, row-major weights, biases, activation, meta."""
    path = os.fspath(path)
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(model_to_dict(model, meta), f, indent=1, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise AuditIOError(f"cannot write {path}: {e.strerror or e}", path=path) from e


def load_model(path) -> MlpModel:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as f:
            return model_from_dict(json.load(f))
    except OSError as e:
        raise AuditIOError(f"cannot read {path}: {e.strerror or e}", path=path) from e


def train(model: MlpModel, data: LabeledDataset, config: TrainConfig):
    """Dispatches to :func:`train_sgd` or :func:`train_dp_sgd` on ``config.dp``.

    Returns ``(model, history, steps_taken)`` in both cases.
    """
    if config.dp is None:
        return _train(model, data, config, None, None)
    return train_dp_sgd(model, data, config)
