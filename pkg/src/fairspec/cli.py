"""Command-line front end.

Subcommands: synth | train | finetune | eval | bound | sharpness | nu-study.
Every command takes a strict JSON config (--config), writes byte-stable
CSV/JSON artifacts into the output directory, and embeds the fully
resolved config in each artifact for provenance. --seed, --threads and
--out override the corresponding config keys. FAIRSPEC_LOG selects the
stderr log level; a timestamped copy of the log goes to <out>/run.log so
artifacts themselves stay timestamp-free.

Exit codes: 0 success, 1 runtime failure, 2 config validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation, fairness, pacbayes, rng, tensor
from .attack import AttackConfig, adversarial_set
from .data import (
    Dataset,
    class_stats,
    load_blobs_csv,
    load_mnist_idx,
    save_blobs_csv,
    synth_blobs,
)
from .fairness import RegConfig, TrainConfig, confusion_margin, finetune_defaults
from .network import FeedForwardNet, he_init, load_checkpoint, save_checkpoint

log = logging.getLogger("fairspec.cli")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class ConfigError(ValueError):
    """Configuration rejected; the message names the offending key."""


def _expect_keys(d: dict, allowed: set[str], required: set[str], path: str) -> None:
    for key in d:
        if key not in allowed:
            raise ConfigError(f"unknown key '{path}{key}'")
    for key in required:
        if key not in d:
            raise ConfigError(f"missing required key '{path}{key}'")


def _get(d: dict, key: str, kind, default, path: str):
    if key not in d:
        if default is _REQUIRED:
            raise ConfigError(f"missing required key '{path}{key}'")
        return default
    value = d[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"key '{path}{key}' has wrong type {type(value).__name__}")
    return value


_REQUIRED = object()


def _parse_data_section(section: dict, path: str, global_seed: int) -> tuple[Dataset, dict]:
    if not isinstance(section, dict):
        raise ConfigError(f"section '{path.rstrip('.')}' must be an object")
    kind = _get(section, "kind", str, _REQUIRED, path)
    if kind == "blobs":
        _expect_keys(
            section,
            {"kind", "d", "d_y", "counts", "centers_scale", "noise_std", "seed"},
            {"kind", "d", "d_y", "counts"},
            path,
        )
        d = _get(section, "d", int, _REQUIRED, path)
        d_y = _get(section, "d_y", int, _REQUIRED, path)
        counts = _get(section, "counts", list, _REQUIRED, path)
        centers_scale = _get(section, "centers_scale", float, 6.0, path)
        noise_std = _get(section, "noise_std", float, 1.0, path)
        seed = _get(section, "seed", int, global_seed, path)
        ds = synth_blobs(d, d_y, counts, centers_scale, noise_std, seed)
        resolved = {
            "kind": "blobs",
            "d": d,
            "d_y": d_y,
            "counts": list(counts),
            "centers_scale": centers_scale,
            "noise_std": noise_std,
            "seed": seed,
        }
        return ds, resolved
    if kind == "mnist":
        _expect_keys(section, {"kind", "images", "labels"}, {"kind", "images", "labels"}, path)
        images = _get(section, "images", str, _REQUIRED, path)
        labels = _get(section, "labels", str, _REQUIRED, path)
        ds = load_mnist_idx(images, labels)
        return ds, {"kind": "mnist", "images": images, "labels": labels}
    if kind == "csv":
        _expect_keys(section, {"kind", "path"}, {"kind", "path"}, path)
        csv_path = _get(section, "path", str, _REQUIRED, path)
        ds, _seed = load_blobs_csv(csv_path)
        return ds, {"kind": "csv", "path": csv_path}
    raise ConfigError(f"key '{path}kind' must be one of blobs/mnist/csv, got {kind!r}")


def _parse_attack_section(
    section: dict, path: str, global_seed: int, data_kind: str
) -> tuple[AttackConfig, dict]:
    if not isinstance(section, dict):
        raise ConfigError(f"section '{path.rstrip('.')}' must be an object")
    _expect_keys(
        section,
        {"norm", "epsilon", "step_size", "iters", "random_start", "seed", "clamp"},
        set(),
        path,
    )
    norm = _get(section, "norm", str, "linf", path)
    epsilon = _get(section, "epsilon", float, 8.0 / 255.0, path)
    step_size = _get(section, "step_size", float, 2.0 / 255.0, path)
    iters = _get(section, "iters", int, 20, path)
    random_start = _get(section, "random_start", bool, True, path)
    seed = _get(section, "seed", int, global_seed, path)
    if "clamp" in section:
        clamp_raw = section["clamp"]
        if clamp_raw is not None and (
            not isinstance(clamp_raw, list) or len(clamp_raw) != 2
        ):
            raise ConfigError(f"key '{path}clamp' must be null or [lo, hi]")
        clamp = None if clamp_raw is None else (float(clamp_raw[0]), float(clamp_raw[1]))
    else:
        # images live in [0, 1]; synthetic data is unconstrained
        clamp = (0.0, 1.0) if data_kind == "mnist" else None
    try:
        cfg = AttackConfig(
            norm=norm,
            epsilon=epsilon,
            step_size=step_size,
            iters=iters,
            random_start=random_start,
            seed=seed,
            clamp=clamp,
        )
    except ValueError as err:
        raise ConfigError(f"invalid attack config: {err}") from err
    resolved = {
        "norm": norm,
        "epsilon": epsilon,
        "step_size": step_size,
        "iters": iters,
        "random_start": random_start,
        "seed": seed,
        "clamp": None if clamp is None else list(clamp),
    }
    return cfg, resolved


def _parse_reg_section(section: dict, path: str) -> tuple[RegConfig, dict]:
    _expect_keys(section, {"alpha", "gamma", "mode", "stale_adversarial"}, set(), path)
    alpha = _get(section, "alpha", float, 0.3, path)
    gamma = _get(section, "gamma", float, 0.0, path)
    mode = _get(section, "mode", str, "hybrid", path)
    stale = _get(section, "stale_adversarial", bool, False, path)
    try:
        cfg = RegConfig(alpha=alpha, gamma=gamma, mode=mode, stale_adversarial=stale)
    except ValueError as err:
        raise ConfigError(f"invalid reg config: {err}") from err
    return cfg, {"alpha": alpha, "gamma": gamma, "mode": mode, "stale_adversarial": stale}


def _parse_train_section(
    section: dict, path: str, global_seed: int, finetuning: bool
) -> tuple[TrainConfig, dict]:
    _expect_keys(
        section,
        {"epochs", "batch_size", "lr", "momentum", "weight_decay", "lr_drops", "seed"},
        set(),
        path,
    )
    base = finetune_defaults(global_seed) if finetuning else TrainConfig(seed=global_seed)
    epochs = _get(section, "epochs", int, base.epochs, path)
    batch_size = _get(section, "batch_size", int, base.batch_size, path)
    lr = _get(section, "lr", float, base.lr, path)
    momentum = _get(section, "momentum", float, base.momentum, path)
    weight_decay = _get(section, "weight_decay", float, base.weight_decay, path)
    drops_raw = _get(section, "lr_drops", list, [list(d) for d in base.lr_drops], path)
    seed = _get(section, "seed", int, global_seed, path)
    try:
        drops = tuple((int(e), float(f)) for e, f in drops_raw)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"key '{path}lr_drops' must be a list of [epoch, factor]") from err
    try:
        cfg = TrainConfig(
            epochs=epochs,
            batch_size=batch_size,
            lr=lr,
            momentum=momentum,
            weight_decay=weight_decay,
            lr_drops=drops,
            seed=seed,
        )
    except ValueError as err:
        raise ConfigError(f"invalid train config: {err}") from err
    resolved = {
        "epochs": epochs,
        "batch_size": batch_size,
        "lr": lr,
        "momentum": momentum,
        "weight_decay": weight_decay,
        "lr_drops": [list(d) for d in drops],
        "seed": seed,
    }
    return cfg, resolved


def _parse_bound_section(section: dict, path: str) -> dict:
    _expect_keys(section, {"gamma", "delta", "nu", "convert_linf"}, set(), path)
    gamma = _get(section, "gamma", float, 0.1, path)
    delta = _get(section, "delta", float, 0.05, path)
    nu = section.get("nu")
    if nu is not None and not isinstance(nu, (int, float)):
        raise ConfigError(f"key '{path}nu' must be null or a number")
    convert = _get(section, "convert_linf", bool, True, path)
    return {
        "gamma": gamma,
        "delta": delta,
        "nu": None if nu is None else float(nu),
        "convert_linf": convert,
    }


def _json_artifact(path: Path, payload: dict, resolved_config: dict) -> None:
    payload = dict(payload)
    payload["config"] = resolved_config
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _csv_artifact(path: Path, lines: list[str], resolved_config: dict) -> None:
    header = "# config=" + json.dumps(resolved_config, sort_keys=True)
    path.write_text("\n".join([header] + lines) + "\n", encoding="utf-8")


def _bound_epsilon_l2(attack_resolved: dict, bound_cfg: dict, dim: int) -> tuple[float, dict]:
    """The bound lives in l2; l-inf budgets convert via eps * sqrt(d)."""
    eps = attack_resolved["epsilon"]
    info = {"attack_norm": attack_resolved["norm"], "attack_epsilon": eps}
    if attack_resolved["norm"] == "l2":
        info["epsilon_l2"] = eps
        return eps, info
    if bound_cfg["convert_linf"]:
        eps_l2 = eps * math.sqrt(dim)
        info["epsilon_l2"] = eps_l2
        info["converted_from_linf"] = True
        return eps_l2, info
    info["epsilon_l2"] = eps
    info["converted_from_linf"] = False
    return eps, info


def _bound_payload(
    net: FeedForwardNet,
    ds: Dataset,
    attack_cfg: AttackConfig,
    attack_resolved: dict,
    bound_cfg: dict,
    seed: int,
    threads: int,
) -> dict:
    stats = class_stats(ds)
    metric_cfg = AttackConfig(
        norm=attack_cfg.norm,
        epsilon=attack_cfg.epsilon,
        step_size=attack_cfg.step_size,
        iters=attack_cfg.iters,
        random_start=attack_cfg.random_start,
        seed=rng.derive(seed, rng.METRICS, 0xB0),
        clamp=attack_cfg.clamp,
    )
    adv = adversarial_set(net, ds, metric_cfg, threads=threads)
    conf = confusion_margin(net, adv, bound_cfg["gamma"])
    try:
        conf_spec = tensor.spectral_norm(conf.m)
    except tensor.PowerIterationError as err:
        conf_spec = err.sigma
    eps_l2, eps_info = _bound_epsilon_l2(attack_resolved, bound_cfg, ds.dim)
    payload: dict = {"epsilon_info": eps_info, "conf_spec": conf_spec}
    try:
        report = pacbayes.bound_value(
            conf_spec=conf_spec,
            net=net,
            stats=stats,
            gamma=bound_cfg["gamma"],
            delta=bound_cfg["delta"],
            epsilon=eps_l2,
            nu=bound_cfg["nu"],
        )
        payload["report"] = json.loads(report.to_json())
    except (pacbayes.InfeasibleBoundError, ZeroDivisionError, ValueError) as err:
        payload["infeasible"] = str(err)
    return payload


def _eval_reports(
    out: Path,
    net: FeedForwardNet,
    train_ds: Dataset,
    test_ds: Dataset | None,
    attack_cfg: AttackConfig,
    resolved: dict,
    threads: int,
) -> None:
    clean = evaluation.per_class_accuracy(net, train_ds)
    robust = evaluation.robust_per_class(net, train_ds, attack_cfg, threads=threads)
    _csv_artifact(out / "report_per_class.csv", evaluation.per_class_csv_lines(clean, robust), resolved)
    kendall = cov = None
    if test_ds is not None:
        test_clean = evaluation.per_class_accuracy(net, test_ds)
        test_robust = evaluation.robust_per_class(net, test_ds, attack_cfg, threads=threads)
        _csv_artifact(
            out / "report_per_class_test.csv",
            evaluation.per_class_csv_lines(test_clean, test_robust),
            resolved,
        )
        try:
            kendall = evaluation.kendall_tau(robust, test_robust)
        except ValueError as err:
            # constant per-class accuracies leave the rank correlation undefined
            log.info("kendall tau skipped: %s", err)
            kendall = None
        cov = evaluation.covariance(robust, test_robust)
        summary = evaluation.summary_csv_lines(test_clean, test_robust, kendall, cov)
    else:
        summary = evaluation.summary_csv_lines(clean, robust)
    _csv_artifact(out / "report_summary.csv", summary, resolved)


def cmd_synth(config: dict, out: Path, seed: int, threads: int) -> int:
    _expect_keys(config, {"seed", "out", "threads", "data"}, {"data"}, "")
    ds, data_resolved = _parse_data_section(config["data"], "data.", seed)
    resolved = {"command": "synth", "seed": seed, "threads": threads, "data": data_resolved}
    save_blobs_csv(ds, data_resolved.get("seed", seed), out / "dataset.csv")
    stats = class_stats(ds)
    _json_artifact(
        out / "stats.json",
        {
            "m": ds.m,
            "d": ds.dim,
            "d_y": ds.d_y,
            "counts": list(stats.counts),
            "m_min": stats.m_min,
            "input_radius": stats.input_radius,
        },
        resolved,
    )
    _json_artifact(out / "resolved_config.json", {}, resolved)
    return 0


def _run_training(config: dict, out: Path, seed: int, threads: int, finetuning: bool) -> int:
    allowed = {"seed", "out", "threads", "data", "data_test", "attack", "reg", "train", "bound"}
    required = {"data"}
    if finetuning:
        allowed.add("checkpoint")
        required.add("checkpoint")
    else:
        allowed.add("net")
        required.add("net")
    _expect_keys(config, allowed, required, "")

    ds, data_resolved = _parse_data_section(config["data"], "data.", seed)
    test_ds = None
    test_resolved = None
    if "data_test" in config:
        test_ds, test_resolved = _parse_data_section(config["data_test"], "data_test.", seed)
    attack_cfg, attack_resolved = _parse_attack_section(
        config.get("attack", {}), "attack.", seed, data_resolved["kind"]
    )
    reg_cfg, reg_resolved = _parse_reg_section(config.get("reg", {}), "reg.")
    train_cfg, train_resolved = _parse_train_section(
        config.get("train", {}), "train.", seed, finetuning
    )
    bound_cfg = _parse_bound_section(config.get("bound", {}), "bound.")

    if finetuning:
        ckpt = _get(config, "checkpoint", str, _REQUIRED, "")
        net = load_checkpoint(ckpt)
        net_resolved: dict = {"checkpoint": ckpt}
        if net.input_dim != ds.dim:
            raise ConfigError(
                f"checkpoint expects input dim {net.input_dim}, dataset has {ds.dim}"
            )
    else:
        net_section = config["net"]
        _expect_keys(net_section, {"hidden", "init_seed"}, {"hidden"}, "net.")
        hidden = _get(net_section, "hidden", list, _REQUIRED, "net.")
        init_seed = _get(net_section, "init_seed", int, rng.derive(seed, rng.INIT), "net.")
        dims = [ds.dim] + [int(v) for v in hidden] + [ds.d_y]
        net = he_init(dims, init_seed)
        net_resolved = {"hidden": [int(v) for v in hidden], "init_seed": init_seed, "dims": dims}

    resolved = {
        "command": "finetune" if finetuning else "train",
        "seed": seed,
        "threads": threads,
        "data": data_resolved,
        "attack": attack_resolved,
        "reg": reg_resolved,
        "train": train_resolved,
        "bound": bound_cfg,
        "net": net_resolved,
    }
    if test_resolved is not None:
        resolved["data_test"] = test_resolved

    trained, history = fairness.train(
        net, ds, attack_cfg, reg_cfg, train_cfg, eval_ds=test_ds, threads=threads
    )

    save_checkpoint(trained, out / "checkpoint.bin")
    _csv_artifact(out / "history.csv", fairness.history_csv_lines(history, ds.d_y), resolved)
    _eval_reports(out, trained, ds, test_ds, attack_cfg, resolved, threads)
    _json_artifact(
        out / "bound.json",
        _bound_payload(trained, ds, attack_cfg, attack_resolved, bound_cfg, seed, threads),
        resolved,
    )
    _json_artifact(out / "resolved_config.json", {}, resolved)
    return 0


def cmd_train(config: dict, out: Path, seed: int, threads: int) -> int:
    return _run_training(config, out, seed, threads, finetuning=False)


def cmd_finetune(config: dict, out: Path, seed: int, threads: int) -> int:
    return _run_training(config, out, seed, threads, finetuning=True)


def cmd_eval(config: dict, out: Path, seed: int, threads: int) -> int:
    _expect_keys(
        config,
        {"seed", "out", "threads", "checkpoint", "data", "data_test", "attack"},
        {"checkpoint", "data"},
        "",
    )
    net = load_checkpoint(_get(config, "checkpoint", str, _REQUIRED, ""))
    ds, data_resolved = _parse_data_section(config["data"], "data.", seed)
    test_ds = None
    test_resolved = None
    if "data_test" in config:
        test_ds, test_resolved = _parse_data_section(config["data_test"], "data_test.", seed)
    attack_cfg, attack_resolved = _parse_attack_section(
        config.get("attack", {}), "attack.", seed, data_resolved["kind"]
    )
    resolved = {
        "command": "eval",
        "seed": seed,
        "threads": threads,
        "checkpoint": config["checkpoint"],
        "data": data_resolved,
        "attack": attack_resolved,
    }
    if test_resolved is not None:
        resolved["data_test"] = test_resolved
    _eval_reports(out, net, ds, test_ds, attack_cfg, resolved, threads)
    _json_artifact(out / "resolved_config.json", {}, resolved)
    return 0


def cmd_bound(config: dict, out: Path, seed: int, threads: int) -> int:
    _expect_keys(
        config,
        {"seed", "out", "threads", "checkpoint", "data", "attack", "bound"},
        {"checkpoint", "data"},
        "",
    )
    net = load_checkpoint(_get(config, "checkpoint", str, _REQUIRED, ""))
    ds, data_resolved = _parse_data_section(config["data"], "data.", seed)
    attack_cfg, attack_resolved = _parse_attack_section(
        config.get("attack", {}), "attack.", seed, data_resolved["kind"]
    )
    bound_cfg = _parse_bound_section(config.get("bound", {}), "bound.")
    resolved = {
        "command": "bound",
        "seed": seed,
        "threads": threads,
        "checkpoint": config["checkpoint"],
        "data": data_resolved,
        "attack": attack_resolved,
        "bound": bound_cfg,
    }
    _json_artifact(
        out / "bound.json",
        _bound_payload(net, ds, attack_cfg, attack_resolved, bound_cfg, seed, threads),
        resolved,
    )
    _json_artifact(out / "resolved_config.json", {}, resolved)
    return 0


def cmd_sharpness(config: dict, out: Path, seed: int, threads: int) -> int:
    _expect_keys(
        config,
        {"seed", "out", "threads", "checkpoint", "data", "attack", "sharpness"},
        {"checkpoint", "data"},
        "",
    )
    net = load_checkpoint(_get(config, "checkpoint", str, _REQUIRED, ""))
    ds, data_resolved = _parse_data_section(config["data"], "data.", seed)
    attack_cfg, attack_resolved = _parse_attack_section(
        config.get("attack", {}), "attack.", seed, data_resolved["kind"]
    )
    section = config.get("sharpness", {})
    _expect_keys(
        section, {"grid", "n_samples", "drop_threshold", "accuracy", "seed"}, set(), "sharpness."
    )
    grid = section.get("grid")
    if grid is not None and not isinstance(grid, list):
        raise ConfigError("key 'sharpness.grid' must be a list of sigma^2 values")
    n_samples = _get(section, "n_samples", int, 50, "sharpness.")
    threshold = _get(section, "drop_threshold", float, 0.05, "sharpness.")
    accuracy = _get(section, "accuracy", str, "robust", "sharpness.")
    sharp_seed = _get(section, "seed", int, seed, "sharpness.")
    resolved = {
        "command": "sharpness",
        "seed": seed,
        "threads": threads,
        "checkpoint": config["checkpoint"],
        "data": data_resolved,
        "attack": attack_resolved,
        "sharpness": {
            "grid": grid if grid is not None else list(pacbayes.default_sharpness_grid()),
            "n_samples": n_samples,
            "drop_threshold": threshold,
            "accuracy": accuracy,
            "seed": sharp_seed,
        },
    }
    report = pacbayes.sharpness_variance(
        net,
        ds,
        grid=grid,
        n_samples=n_samples,
        drop_threshold=threshold,
        seed=sharp_seed,
        accuracy=accuracy,
        attack_cfg=attack_cfg,
        threads=threads,
    )
    _json_artifact(out / "sharpness.json", json.loads(report.to_json()), resolved)
    _json_artifact(out / "resolved_config.json", {}, resolved)
    return 0


def cmd_nu_study(config: dict, out: Path, seed: int, threads: int) -> int:
    _expect_keys(config, {"seed", "out", "threads", "nu"}, {"nu"}, "")
    section = config["nu"]
    _expect_keys(section, {"d_y", "trials", "generator"}, {"d_y", "trials"}, "nu.")
    d_y = _get(section, "d_y", int, _REQUIRED, "nu.")
    trials = _get(section, "trials", int, _REQUIRED, "nu.")
    generator = _get(section, "generator", str, pacbayes.DEFAULT_NU_GENERATOR, "nu.")
    resolved = {
        "command": "nu-study",
        "seed": seed,
        "threads": threads,
        "nu": {"d_y": d_y, "trials": trials, "generator": generator},
    }
    report = pacbayes.nu_study(d_y, trials, seed, dist_spec=generator)
    _json_artifact(out / "nu.json", json.loads(report.to_json()), resolved)
    _csv_artifact(out / "nu_hist.csv", report.histogram_csv_lines(), resolved)
    _json_artifact(out / "resolved_config.json", {}, resolved)
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "finetune": cmd_finetune,
    "eval": cmd_eval,
    "bound": cmd_bound,
    "sharpness": cmd_sharpness,
    "nu-study": cmd_nu_study,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairspec",
        description="Fairness-aware adversarial training and worst-class bound reports",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a JSON config")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--threads", type=int, default=None, help="worker thread cap")
        p.add_argument("--out", default=None, help="override output directory")
    return parser


def _setup_logging(out: Path) -> None:
    level = LOG_LEVELS.get(os.environ.get("FAIRSPEC_LOG", "info").lower(), logging.INFO)
    root = logging.getLogger("fairspec")
    root.setLevel(logging.DEBUG)
    root.handlers.clear()
    stream = logging.StreamHandler(sys.stderr)
    stream.setLevel(level)
    stream.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    root.addHandler(stream)
    # timestamps live only in the side log, never in artifacts
    file_handler = logging.FileHandler(out / "run.log", encoding="utf-8")
    file_handler.setLevel(logging.INFO)
    file_handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    root.addHandler(file_handler)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as f:
            config = json.load(f)
    except (OSError, json.JSONDecodeError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    if not isinstance(config, dict):
        print("config error: top level must be a JSON object", file=sys.stderr)
        return 2

    seed = args.seed if args.seed is not None else config.get("seed", 0)
    threads = args.threads if args.threads is not None else config.get("threads", 1)
    out_str = args.out if args.out is not None else config.get("out")
    if out_str is None:
        print("config error: missing required key 'out' (or pass --out)", file=sys.stderr)
        return 2
    if not isinstance(seed, int) or isinstance(seed, bool):
        print("config error: key 'seed' must be an integer", file=sys.stderr)
        return 2
    if not isinstance(threads, int) or isinstance(threads, bool) or threads < 1:
        print("config error: key 'threads' must be a positive integer", file=sys.stderr)
        return 2

    out = Path(out_str)
    out.mkdir(parents=True, exist_ok=True)
    _setup_logging(out)

    try:
        return COMMANDS[args.command](config, out, seed, threads)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - CLI boundary
        log.exception("command failed")
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
