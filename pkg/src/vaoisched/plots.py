"""File-based plot emission for sweeps and training curves."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .sweep import read_aggregate, summarize_aggregate  # noqa: E402

METRIC_LABELS = {
    "avg_vaoi": "average VAoI",
    "cvar": "CVaR of VAoI",
    "avg_cost": "average transmission cost",
}


def plot_sweep(agg_csv, out_dir=None) -> list[Path]:
    """One line plot per metric: mean across seeds with a min/max band."""
    agg_csv = Path(agg_csv)
    rows = read_aggregate(agg_csv)
    if not rows:
        raise ValueError(f"no rows in {agg_csv}")
    param = rows[0]["param"]
    summary = summarize_aggregate(rows)
    out_dir = Path(out_dir) if out_dir is not None else agg_csv.parent / "plots"
    out_dir.mkdir(parents=True, exist_ok=True)

    written = []
    for metric, label in METRIC_LABELS.items():
        fig, ax = plt.subplots(figsize=(6, 4))
        for algo, by_value in sorted(summary.items()):
            xs = sorted(by_value)
            means = [by_value[x][metric]["mean"] for x in xs]
            lows = [by_value[x][metric]["min"] for x in xs]
            highs = [by_value[x][metric]["max"] for x in xs]
            ax.plot(xs, means, marker="o", label=algo)
            ax.fill_between(xs, lows, highs, alpha=0.2)
        ax.set_xlabel(param)
        ax.set_ylabel(label)
        ax.legend()
        ax.grid(alpha=0.3)
        fig.tight_layout()
        path = out_dir / f"{metric}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def plot_training(metrics_csv, out_dir=None) -> Path:
    """Reward, multiplier, and cost trajectories of one training run."""
    import csv

    metrics_csv = Path(metrics_csv)
    iters, rewards, lams, etas = [], [], [], []
    with open(metrics_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            iters.append(int(row["iteration"]))
            rewards.append(float(row["mean_reward"]))
            lams.append(float(row["lambda"]))
            etas.append(float(row["eta"]))

    out_dir = Path(out_dir) if out_dir is not None else metrics_csv.parent / "plots"
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))
    axes[0].plot(iters, rewards)
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("mean shaped reward")
    axes[1].plot(iters, lams)
    axes[1].set_xlabel("iteration")
    axes[1].set_ylabel("multiplier")
    axes[2].plot(iters, etas)
    axes[2].set_xlabel("iteration")
    axes[2].set_ylabel("running average cost")
    for ax in axes:
        ax.grid(alpha=0.3)
    fig.tight_layout()
    path = out_dir / "training.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
