"""Parameter sweeps: train/evaluate grids and long-format aggregation."""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .env import ConfigError
from .harness import eval_seed, evaluate_checkpoint, train_run

SWEEP_PARAMS = ("eta_max", "arrival_rate", "success_prob", "n_users", "alpha")

AGG_HEADER = ("param", "param_value", "algo", "seed", "avg_vaoi", "cvar", "avg_cost")


def apply_sweep_value(config: ExperimentConfig, param: str, value) -> ExperimentConfig:
    """Return a copy of the configuration with one swept parameter applied."""
    if param == "eta_max":
        env = dataclasses.replace(config.env, eta_max=float(value))
        return config.replace(env=env)
    if param == "arrival_rate":
        env = dataclasses.replace(
            config.env, arrival_rates=(float(value),) * config.env.n_users
        )
        return config.replace(env=env)
    if param == "success_prob":
        env = dataclasses.replace(config.env, success_prob=float(value))
        return config.replace(env=env)
    if param == "n_users":
        n = int(value)
        env = dataclasses.replace(
            config.env, n_users=n, arrival_rates=(config.env.arrival_rates[0],) * n
        )
        return config.replace(env=env)
    if param == "alpha":
        train = dataclasses.replace(config.train, alpha=float(value))
        ev = dataclasses.replace(
            config.eval, alphas=tuple(sorted(set(config.eval.alphas) | {float(value)}))
        )
        return config.replace(train=train, eval=ev)
    raise ConfigError(f"unknown sweep parameter {param!r}, expected one of {SWEEP_PARAMS}")


def _run_dir(root: Path, param: str, value, algo: str, seed: int) -> Path:
    return root / f"{param}_{value}" / f"{algo}_seed{seed}"


def run_sweep(
    base: ExperimentConfig,
    param: str,
    values,
    algos,
    out_root,
    seeds=None,
    log=None,
) -> Path:
    """One training + evaluation run per (value, algo, seed).

    Completed runs (directories with eval.json) are skipped, so re-running
    the sweep and the aggregation is idempotent. Returns the aggregated
    long-format CSV path.
    """
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {param!r}, expected one of {SWEEP_PARAMS}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    out_root = Path(out_root)
    seeds = tuple(seeds) if seeds is not None else base.seeds

    for value in values:
        cfg = apply_sweep_value(base, param, value)
        for algo in algos:
            for seed in seeds:
                run_dir = _run_dir(out_root, param, value, algo, seed)
                if (run_dir / "eval.json").exists():
                    continue
                if log is not None:
                    log(f"training {param}={value} algo={algo} seed={seed}")
                train_run(cfg, algo, seed, run_dir)
                evaluate_checkpoint(
                    run_dir / "ckpt_final.npz",
                    slots=cfg.eval.slots,
                    seeds=[eval_seed(seed, i) for i in range(cfg.eval.n_eval_seeds)],
                    alphas=cfg.eval.alphas,
                    out_dir=run_dir,
                    greedy=cfg.eval.greedy,
                )
    return aggregate_sweep(base, param, values, algos, out_root, seeds)


def aggregate_sweep(
    base: ExperimentConfig, param: str, values, algos, out_root, seeds=None
) -> Path:
    """Collect per-run evaluation summaries into one long-format CSV."""
    out_root = Path(out_root)
    seeds = tuple(seeds) if seeds is not None else base.seeds
    rows = []
    for value in values:
        cfg = apply_sweep_value(base, param, value)
        primary_alpha = cfg.train.alpha
        for algo in algos:
            for seed in seeds:
                eval_path = _run_dir(out_root, param, value, algo, seed) / "eval.json"
                if not eval_path.exists():
                    raise FileNotFoundError(f"missing evaluation for {eval_path.parent}")
                report = json.loads(eval_path.read_text())
                mean = report["mean"]
                rows.append(
                    (
                        param,
                        value,
                        algo,
                        seed,
                        mean["avg_vaoi"],
                        mean["cvar"][str(primary_alpha)],
                        mean["avg_cost"],
                    )
                )
    agg_path = out_root / "aggregate.csv"
    with open(agg_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGG_HEADER)
        writer.writerows(rows)
    return agg_path


def read_aggregate(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for row in reader:
            row["param_value"] = float(row["param_value"])
            row["seed"] = int(row["seed"])
            for key in ("avg_vaoi", "cvar", "avg_cost"):
                row[key] = float(row[key])
            rows.append(row)
    return rows


def summarize_aggregate(rows: list[dict]) -> dict:
    """Per (algo, param_value) mean/min/max across seeds for each metric."""
    out = {}
    for row in rows:
        out.setdefault((row["algo"], row["param_value"]), []).append(row)
    summary = {}
    for (algo, value), group in sorted(out.items()):
        entry = {}
        for metric in ("avg_vaoi", "cvar", "avg_cost"):
            vals = np.array([g[metric] for g in group])
            entry[metric] = {
                "mean": float(vals.mean()),
                "min": float(vals.min()),
                "max": float(vals.max()),
            }
        summary.setdefault(algo, {})[value] = entry
    return summary
