"""Command-line entry point: ``leakaudit {audit,sweep,validate} --config FILE``.

Exit status is 0 on success, 2 for configuration problems and 1 for
anything that fails while running. Failures print a single line
``error:<category>:<message>`` to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from typing import Any, Optional

from leakaudit import accountant, attacks, datasets, metrics, models, reports
from leakaudit import rng as rng_lib
from leakaudit.errors import AuditError, ConfigError
from leakaudit.models import DpParams, TrainConfig

_KNOWN_ATTACKS = attacks.ATTACK_ORDER


@dataclasses.dataclass
class AuditConfig:
    """Parsed and validated audit configuration (see README for the JSON layout)."""

    raw: dict
    base_dir: str
    seed: int
    dataset: dict
    n_members: int
    n_nonmembers: int
    hidden_layers: list[int]
    target_train: dict
    attacks: list[str]
    shadow: Optional[dict]
    bins: int
    fpr_points: list[float]
    output_dir: str
    sweep: Optional[dict]
    threads: int

    def resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.normpath(os.path.join(self.base_dir, path))


def _require(d, key, where, kind=None):
    if not isinstance(d, dict) or key not in d:
        raise ConfigError(f"missing {where}.{key}")
    value = d[key]
    if kind is not None and (not isinstance(value, kind) or isinstance(value, bool)):
        raise ConfigError(f"{where}.{key} has the wrong type ({type(value).__name__})")
    return value


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


def parse_config(raw: Any, base_dir: str = ".", seed_override=None, out_override=None) -> AuditConfig:
    """Validates a config document; relative paths are taken against ``base_dir``."""
    _check_keys(
        raw,
        {"seed", "dataset", "split", "target", "attacks", "shadow", "metrics",
         "output_dir", "sweep", "threads"},
        "config",
    )
    seed = raw.get("seed", 0) if seed_override is None else seed_override
    try:
        seed = rng_lib.check_seed(seed)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"seed: {e}") from None

    ds = _require(raw, "dataset", "config", dict)
    _check_keys(ds, {"synthetic", "csv"}, "dataset")
    if len(ds) != 1:
        raise ConfigError("dataset needs exactly one of 'synthetic' or 'csv'")
    if "synthetic" in ds:
        syn = ds["synthetic"]
        _check_keys(syn, {"n_per_class", "n_features", "num_classes", "class_separation"},
                    "dataset.synthetic")
        for key in ("n_per_class", "n_features", "num_classes"):
            _require(syn, key, "dataset.synthetic", int)
        _require(syn, "class_separation", "dataset.synthetic", (int, float))
    else:
        csv_cfg = ds["csv"]
        _check_keys(csv_cfg, {"path", "label_column", "standardize"}, "dataset.csv")
        _require(csv_cfg, "path", "dataset.csv", str)
        _require(csv_cfg, "label_column", "dataset.csv", str)

    split = _require(raw, "split", "config", dict)
    _check_keys(split, {"n_members", "n_nonmembers"}, "split")
    n_members = _require(split, "n_members", "split", int)
    n_nonmembers = _require(split, "n_nonmembers", "split", int)
    if n_members <= 0 or n_nonmembers <= 0:
        raise ConfigError("split sizes must be positive")

    target = _require(raw, "target", "config", dict)
    _check_keys(target, {"hidden_layers", "train"}, "target")
    hidden = target.get("hidden_layers", [])
    if not isinstance(hidden, list) or not all(isinstance(h, int) and h > 0 for h in hidden):
        raise ConfigError("target.hidden_layers must be a list of positive integers")
    target_train = _require(target, "train", "target", dict)
    _train_config(target_train, 0, "target.train")

    attack_cfg = _require(raw, "attacks", "config", dict)
    _check_keys(attack_cfg, set(_KNOWN_ATTACKS), "attacks")
    enabled = [name for name in _KNOWN_ATTACKS if attack_cfg.get(name) is True]
    if not enabled:
        raise ConfigError("no attack enabled; set at least one of " + ", ".join(_KNOWN_ATTACKS))

    shadow = raw.get("shadow")
    if any(n != attacks.POPULATION_LOSS for n in enabled):
        if shadow is None:
            raise ConfigError("shadow attacks are enabled but 'shadow' is missing")
    if shadow is not None:
        _check_keys(shadow, {"n_shadows", "shadow_train_fraction", "hidden_layers",
                             "shadow_train", "attack_train"}, "shadow")
        n_shadows = _require(shadow, "n_shadows", "shadow", int)
        if n_shadows < 2:
            raise ConfigError("shadow.n_shadows must be >= 2")
        frac = _require(shadow, "shadow_train_fraction", "shadow", (int, float))
        if not 0 < frac < 1:
            raise ConfigError("shadow.shadow_train_fraction must be in (0, 1)")
        if "shadow_train" in shadow:
            _train_config(shadow["shadow_train"], 0, "shadow.shadow_train")
        _train_config(_require(shadow, "attack_train", "shadow", dict), 0, "shadow.attack_train")

    metric_cfg = raw.get("metrics", {})
    _check_keys(metric_cfg, {"bins", "fpr_points"}, "metrics")
    bins = metric_cfg.get("bins", metrics.DEFAULT_BINS)
    if not isinstance(bins, int) or isinstance(bins, bool) or bins < 1:
        raise ConfigError("metrics.bins must be a positive integer")
    fpr_points = metric_cfg.get("fpr_points", list(metrics.DEFAULT_FPR_POINTS))
    if not isinstance(fpr_points, list) or not all(
        isinstance(f, (int, float)) and 0 <= f <= 1 for f in fpr_points
    ):
        raise ConfigError("metrics.fpr_points must be a list of numbers in [0, 1]")

    output_dir = out_override if out_override is not None else raw.get("output_dir", "audit_out")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir must be a nonempty string")

    sweep = raw.get("sweep")
    if sweep is not None:
        _check_keys(sweep, {"sigmas", "clip_norm", "delta", "attacks"}, "sweep")
        sigmas = _require(sweep, "sigmas", "sweep", list)
        if not sigmas or not all(isinstance(s, (int, float)) and s > 0 for s in sigmas):
            raise ConfigError("sweep.sigmas must be a nonempty list of positive numbers")
        if any(b <= a for a, b in zip(sigmas, sigmas[1:])):
            raise ConfigError("sweep.sigmas must be strictly increasing")
        sweep_attacks = sweep.get("attacks", enabled)
        if not set(sweep_attacks) <= set(_KNOWN_ATTACKS) or not sweep_attacks:
            raise ConfigError(f"sweep.attacks must be a nonempty subset of {list(_KNOWN_ATTACKS)}")
        if any(n != attacks.POPULATION_LOSS for n in sweep_attacks) and shadow is None:
            raise ConfigError("sweep uses shadow attacks but 'shadow' is missing")

    threads = raw.get("threads", 1)
    if not isinstance(threads, int) or isinstance(threads, bool) or threads < 1:
        raise ConfigError("threads must be a positive integer")

    cfg = AuditConfig(
        raw=raw, base_dir=base_dir, seed=seed, dataset=ds, n_members=n_members,
        n_nonmembers=n_nonmembers, hidden_layers=list(hidden), target_train=target_train,
        attacks=enabled, shadow=shadow, bins=bins, fpr_points=[float(f) for f in fpr_points],
        output_dir=output_dir, sweep=sweep, threads=threads,
    )
    if "csv" in ds:
        path = cfg.resolve(ds["csv"]["path"])
        if not os.path.isfile(path):
            raise ConfigError(f"dataset file not found: {path}")
    return cfg


def _train_config(d: dict, seed: int, where: str) -> TrainConfig:
    _check_keys(d, {"learning_rate", "epochs", "batch_size", "l2_coefficient", "dp"}, where)
    dp = d.get("dp")
    try:
        if dp is not None:
            _check_keys(dp, {"clip_norm", "noise_multiplier", "delta"}, f"{where}.dp")
            clip = dp.get("clip_norm")
            clip = float("inf") if clip in ("inf", "Infinity") else clip
            dp = DpParams(clip, dp.get("noise_multiplier"), dp.get("delta", 1e-5))
        return TrainConfig(
            learning_rate=_require(d, "learning_rate", where, (int, float)),
            epochs=_require(d, "epochs", where, int),
            batch_size=_require(d, "batch_size", where, int),
            l2_coefficient=d.get("l2_coefficient", 0.0),
            seed=seed,
            dp=dp,
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{where}: {e}") from None


def load_config(path, seed_override=None, out_override=None) -> AuditConfig:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None
    return parse_config(raw, os.path.dirname(os.path.abspath(path)), seed_override, out_override)


# Fixed derivation slots for the master seed.
_SEED_DATASET, _SEED_SPLIT, _SEED_INIT, _SEED_TRAIN, _SEED_SHADOW, _SEED_ATTACK, _SEED_SWEEP = range(7)


def _seed(cfg: AuditConfig, slot: int) -> int:
    return rng_lib.derive_seed(cfg.seed, slot)


def _load_dataset(cfg: AuditConfig) -> datasets.LabeledDataset:
    if "synthetic" in cfg.dataset:
        s = cfg.dataset["synthetic"]
        return datasets.generate_synthetic(
            s["n_per_class"], s["n_features"], s["num_classes"], float(s["class_separation"]),
            _seed(cfg, _SEED_DATASET),
        )
    c = cfg.dataset["csv"]
    return datasets.load_csv(cfg.resolve(c["path"]), c["label_column"], bool(c.get("standardize", False)))


def _shadow_config(cfg: AuditConfig, layer_sizes, target_train: TrainConfig):
    if cfg.shadow is None:
        return None
    s = cfg.shadow
    hidden = s.get("hidden_layers", cfg.hidden_layers)
    shadow_train = (
        _train_config(s["shadow_train"], 0, "shadow.shadow_train")
        if "shadow_train" in s
        else dataclasses.replace(target_train, dp=None)
    )
    return attacks.ShadowConfig(
        n_shadows=s["n_shadows"],
        shadow_train_fraction=float(s["shadow_train_fraction"]),
        shadow_model_layers=(layer_sizes[0], *hidden, layer_sizes[-1]),
        shadow_train_config=shadow_train,
        attack_train_config=_train_config(
            s["attack_train"], _seed(cfg, _SEED_ATTACK), "shadow.attack_train"
        ),
        seed=_seed(cfg, _SEED_SHADOW),
    )


def _prepare(cfg: AuditConfig):
    dataset = _load_dataset(cfg)
    split = datasets.make_audit_split(dataset, cfg.n_members, cfg.n_nonmembers, _seed(cfg, _SEED_SPLIT))
    layer_sizes = (dataset.n_features, *cfg.hidden_layers, dataset.num_classes)
    train_cfg = _train_config(cfg.target_train, _seed(cfg, _SEED_TRAIN), "target.train")
    return dataset, split, layer_sizes, train_cfg


def run_audit(cfg: AuditConfig, out=None) -> list[str]:
    """dataset -> split -> target -> attacks -> metrics -> report files. Returns the manifest."""
    out = out or sys.stdout
    dataset, split, layer_sizes, train_cfg = _prepare(cfg)
    members = dataset.subset(split.member_idx)
    nonmembers = dataset.subset(split.nonmember_idx)
    init = models.init_mlp(layer_sizes, _seed(cfg, _SEED_INIT))
    target, _, steps = models.train(init, members, train_cfg)

    results = attacks.run_attacks(
        target, dataset, split, cfg.attacks, _shadow_config(cfg, layer_sizes, train_cfg), cfg.threads
    )
    epsilon = None
    if train_cfg.dp is not None and train_cfg.dp.noise_multiplier > 0:
        epsilon = accountant.epsilon_of(train_cfg.dp.noise_multiplier, steps, train_cfg.dp.delta)
    report = reports.build_report(
        reports.summarize_target(target, members, nonmembers, train_cfg),
        results,
        bins=cfg.bins,
        fpr_points=cfg.fpr_points,
        epsilon=epsilon,
        config={**cfg.raw, "seed": cfg.seed},
    )
    out_dir = cfg.resolve(cfg.output_dir)
    manifest = reports.emit(report, out_dir)
    models.save_model(
        target, os.path.join(out_dir, "target_model.json"),
        meta={"seed": cfg.seed, "config": train_cfg.to_dict(), "prng_version": rng_lib.PRNG_VERSION},
    )
    manifest.append("target_model.json")

    for name in manifest:
        print(os.path.join(out_dir, name), file=out)
    t = report.target
    print(f"target train_acc={t['train_accuracy']:.4f} test_acc={t['test_accuracy']:.4f} "
          f"loss_gap={t['loss_gap']:.4f} acc_gap={t['accuracy_gap']:.4f}", file=out)
    for block in report.attacks:
        print(f"auc {block.attack_name}={block.auc:.4f} "
              f"advantage={block.membership_advantage:.4f}", file=out)
    if epsilon is not None:
        print(f"epsilon={epsilon.epsilon:.6g} delta={epsilon.delta:g} ({epsilon.method})", file=out)
    return manifest


def run_sweep(cfg: AuditConfig, out=None) -> list[accountant.TradeoffRow]:
    out = out or sys.stdout
    if cfg.sweep is None:
        raise ConfigError("the 'sweep' section (with 'sigmas') is required for the sweep command")
    dataset, split, layer_sizes, train_cfg = _prepare(cfg)
    s = cfg.sweep
    try:
        base = dataclasses.replace(
            train_cfg,
            seed=_seed(cfg, _SEED_SWEEP),
            dp=DpParams(s.get("clip_norm", 1.0), 0.0, s.get("delta", 1e-5)),
        )
    except ValueError as e:
        raise ConfigError(f"sweep: {e}") from None
    attack_names = s.get("attacks", cfg.attacks)
    rows = accountant.sweep_tradeoff(
        dataset, split, layer_sizes, base, s["sigmas"], attack_names,
        _shadow_config(cfg, layer_sizes, dataclasses.replace(train_cfg, dp=None)), cfg.threads,
    )
    out_dir = cfg.resolve(cfg.output_dir)
    name = reports.write_sweep(rows, out_dir)
    print(os.path.join(out_dir, name), file=out)
    header = accountant.sweep_columns(rows)
    print("\t".join(header), file=out)
    for row in rows:
        values = [row.sigma, row.epsilon, row.test_accuracy]
        values += [row.attack_auc[h[len("auc_"):]] for h in header[3:-1]]
        values.append(row.loss_gap)
        print("\t".join(f"{v:.6g}" for v in values), file=out)
    return rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leakaudit", description="Membership inference privacy audits of small classifiers."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("audit", "train the target, run the enabled attacks, write the report"),
        ("sweep", "train DP-SGD targets over the configured noise multipliers"),
        ("validate", "check the configuration without running anything"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default=None, help="override output_dir")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 2
    try:
        cfg = load_config(args.config, args.seed, args.out)
        if args.command == "validate":
            print(f"ok: {args.config}")
        elif args.command == "audit":
            run_audit(cfg)
        else:
            run_sweep(cfg)
    except ConfigError as e:
        print(f"error:config:{e}", file=sys.stderr)
        return 2
    except AuditError as e:
        print(f"error:{e.category}:{e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - CLI must not crash with a traceback
        print(f"error:internal:{type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
