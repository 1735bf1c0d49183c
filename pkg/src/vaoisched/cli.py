"""Command-line interface: train, evaluate, sweep, oracle, plot."""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import json
import os
import sys
from pathlib import Path

from .agents import ALGORITHMS
from .config import PROFILES, ExperimentConfig, load_config
from .env import ConfigError
from .harness import eval_seed, evaluate_checkpoint, train_run
from .oracles import SmallInstance, oracle_report
from .sweep import SWEEP_PARAMS, run_sweep

OUT_ROOT_ENV = "VAOISCHED_RUNS"


def _default_out_root() -> Path:
    return Path(os.environ.get(OUT_ROOT_ENV, "runs"))


def _resolve_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        config = load_config(args.config)
    elif getattr(args, "profile", None):
        config = PROFILES[args.profile]()
    else:
        config = ExperimentConfig()

    env_over = {}
    if getattr(args, "n_users", None) is not None:
        env_over["n_users"] = args.n_users
        env_over["arrival_rates"] = (config.env.arrival_rates[0],)
    if getattr(args, "arrival_rate", None) is not None:
        n = env_over.get("n_users", config.env.n_users)
        env_over["arrival_rates"] = (args.arrival_rate,) * n
    if getattr(args, "success_prob", None) is not None:
        env_over["success_prob"] = args.success_prob
    if getattr(args, "eta_max", None) is not None:
        env_over["eta_max"] = args.eta_max
    if getattr(args, "d_max", None) is not None:
        env_over["d_max"] = args.d_max
    if env_over:
        config = config.replace(env=dataclasses.replace(config.env, **env_over))

    train_over = {}
    if getattr(args, "alpha", None) is not None:
        train_over["alpha"] = args.alpha
    if getattr(args, "primal_updates", None) is not None:
        train_over["primal_updates"] = args.primal_updates
    if train_over:
        config = config.replace(train=dataclasses.replace(config.train, **train_over))

    if getattr(args, "iterations", None) is not None:
        config = config.replace(iterations=args.iterations)
    if getattr(args, "slots", None) is not None:
        config = config.replace(eval=dataclasses.replace(config.eval, slots=args.slots))
    return config


def _cmd_train(args) -> int:
    config = _resolve_config(args)
    seed = args.seed
    if args.out:
        out_dir = Path(args.out)
    else:
        stamp = datetime.datetime.now().strftime("%Y%m%d-%H%M%S")
        out_dir = _default_out_root() / f"{args.algo}_seed{seed}_{stamp}"

    def log(m):
        if not args.quiet:
            print(
                f"iter {m.iteration:4d}  reward {m.mean_reward:10.3f}  "
                f"lambda {m.lam:8.4f}  eta {m.eta:.4f}",
                flush=True,
            )

    run_dir = train_run(config, args.algo, seed, out_dir, ckpt_every=args.ckpt_every, log=log)

    if not args.no_eval:
        seeds = [eval_seed(seed, i) for i in range(config.eval.n_eval_seeds)]
        report = evaluate_checkpoint(
            run_dir / "ckpt_final.npz",
            slots=config.eval.slots,
            seeds=seeds,
            alphas=config.eval.alphas,
            out_dir=run_dir,
            greedy=config.eval.greedy,
        )
        print(json.dumps(report["mean"], indent=2))
    print(f"run directory: {run_dir}")
    return 0


def _cmd_evaluate(args) -> int:
    ckpt = Path(args.checkpoint)
    if args.seeds:
        seeds = args.seeds
    else:
        from .checkpoint import load_checkpoint

        meta, _ = load_checkpoint(ckpt)
        seeds = [eval_seed(meta["seed"], i) for i in range(args.n_seeds)]
    out_dir = Path(args.out) if args.out else ckpt.parent
    report = evaluate_checkpoint(
        ckpt,
        slots=args.slots,
        seeds=seeds,
        alphas=args.alphas,
        out_dir=out_dir,
        greedy=args.greedy,
    )
    print(json.dumps(report["mean"], indent=2))
    print(f"evaluation written to {out_dir}")
    return 0


def _cmd_sweep(args) -> int:
    config = _resolve_config(args)
    out_root = Path(args.out) if args.out else _default_out_root() / f"sweep_{args.param}"
    agg = run_sweep(
        config,
        args.param,
        args.values,
        args.algos,
        out_root,
        seeds=args.seeds or None,
        log=None if args.quiet else lambda msg: print(msg, flush=True),
    )
    from .plots import plot_sweep

    written = plot_sweep(agg)
    print(f"aggregate: {agg}")
    for p in written:
        print(f"plot: {p}")
    return 0


def _cmd_oracle(args) -> int:
    instance = SmallInstance(
        n_users=args.users,
        arrival_rates=tuple(args.rates) if args.rates else (0.5,) * args.users,
        success_prob=args.success_prob,
        d_max=args.d_max,
        gamma=args.gamma,
        lam=args.lam,
    )
    report = oracle_report(
        instance, alphas=args.alphas, mc_slots=args.mc_slots, seed=args.seed
    )
    print(json.dumps(report, indent=2))
    return 0


def _cmd_plot(args) -> int:
    from .plots import plot_sweep, plot_training

    if args.sweep:
        for p in plot_sweep(args.sweep, out_dir=args.out):
            print(f"plot: {p}")
    if args.metrics:
        print(f"plot: {plot_training(args.metrics, out_dir=args.out)}")
    if not args.sweep and not args.metrics:
        raise ConfigError("nothing to plot: pass --sweep and/or --metrics")
    return 0


def _add_config_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON experiment config")
    p.add_argument("--profile", choices=sorted(PROFILES), help="named config profile")
    p.add_argument("--n-users", type=int)
    p.add_argument("--arrival-rate", type=float)
    p.add_argument("--success-prob", type=float)
    p.add_argument("--eta-max", type=float)
    p.add_argument("--d-max", type=int)
    p.add_argument("--alpha", type=float, help="CVaR confidence level (risk level is 1 - alpha)")
    p.add_argument("--iterations", type=int)
    p.add_argument("--slots", type=int, help="evaluation slots")
    p.add_argument("--primal-updates", type=int)
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vaoisched",
        description="Train, evaluate, and analyze version-age schedulers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one agent and evaluate the final policy")
    p.add_argument("--algo", required=True, choices=ALGORITHMS)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", help="run directory (default under $%s)" % OUT_ROOT_ENV)
    p.add_argument("--ckpt-every", type=int, default=None)
    p.add_argument("--no-eval", action="store_true")
    _add_config_options(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="deploy a frozen checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--slots", type=int, default=5000)
    p.add_argument("--seeds", type=int, nargs="*", default=None)
    p.add_argument("--n-seeds", type=int, default=1, help="derived eval seeds when --seeds absent")
    p.add_argument("--alphas", type=float, nargs="+", default=[0.75])
    p.add_argument("--out")
    p.add_argument("--greedy", action="store_true")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="train/evaluate a parameter grid and aggregate")
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--algos", nargs="+", required=True, choices=ALGORITHMS)
    p.add_argument("--seeds", type=int, nargs="*", default=None)
    p.add_argument("--out")
    _add_config_options(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("oracle", help="exact small-instance solve and report")
    p.add_argument("--users", type=int, default=1)
    p.add_argument("--rates", type=float, nargs="*", default=None)
    p.add_argument("--success-prob", type=float, default=0.9)
    p.add_argument("--d-max", type=int, default=3)
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--alphas", type=float, nargs="+", default=[0.75])
    p.add_argument("--mc-slots", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("plot", help="re-emit plots from existing CSVs")
    p.add_argument("--sweep", help="path to a sweep aggregate.csv")
    p.add_argument("--metrics", help="path to a run metrics.csv")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
