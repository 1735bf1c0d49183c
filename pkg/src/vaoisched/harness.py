"""Run orchestration: manifests, training runs, frozen-policy evaluation.

Every training run lives in its own directory containing a manifest (the
full config snapshot plus provenance, written before training starts),
iteration-level metrics, and checkpoints. Evaluation deploys a frozen
policy on fresh seeds disjoint from training seeds and emits a JSON
summary plus the pooled per-slot age samples.
"""

from __future__ import annotations

import csv
import datetime
import json
import subprocess
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .agents import Trainer
from .checkpoint import build_actor, load_checkpoint, save_checkpoint
from .config import ExperimentConfig
from .env import EnvConfig, StatusUpdateEnv
from .heuristics import make_heuristic
from .metrics import average_cost, average_vaoi, empirical_cvar

EVAL_SEED_OFFSET = 1_000_000

METRICS_HEADER = (
    "iteration",
    "mean_reward",
    "lambda",
    "eta",
    "critic_loss",
    "actor_loss",
    "wall_time",
)


def eval_seed(train_seed: int, index: int = 0) -> int:
    """Evaluation seeds are disjoint from training seeds by a fixed offset."""
    return train_seed + EVAL_SEED_OFFSET + index


def code_revision() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=Path(__file__).parent,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"unversioned-{__version__}"


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _write_manifest(path: Path, manifest: dict) -> None:
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))


def train_run(
    config: ExperimentConfig,
    algo: str,
    seed: int,
    out_dir,
    ckpt_every: int | None = None,
    log=None,
) -> Path:
    """Train one agent and persist manifest, metrics, and checkpoints.

    Returns the run directory. A failure mid-run leaves the manifest with
    status "failed" so partial runs are recognizable.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.json"
    metrics_path = out_dir / "metrics.csv"
    final_ckpt = out_dir / "ckpt_final.npz"
    if ckpt_every is None:
        ckpt_every = max(1, config.iterations // 4)

    manifest = {
        "algo": algo,
        "seed": seed,
        "config": config.to_dict(),
        "code_revision": code_revision(),
        "started_at": _now(),
        "finished_at": None,
        "status": "running",
        "outputs": {
            "metrics": metrics_path.name,
            "checkpoint": final_ckpt.name,
        },
    }
    _write_manifest(manifest_path, manifest)

    trainer = Trainer(algo, config.env, config.train, seed=seed)
    try:
        with open(metrics_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRICS_HEADER)
            for _ in range(config.iterations):
                m = trainer.run_iteration()
                writer.writerow(
                    [
                        m.iteration,
                        repr(m.mean_reward),
                        repr(m.lam),
                        repr(m.eta),
                        repr(m.critic_loss),
                        repr(m.actor_loss),
                        f"{m.wall_time:.3f}",
                    ]
                )
                fh.flush()
                if m.iteration % ckpt_every == 0 and m.iteration < config.iterations:
                    save_checkpoint(trainer, out_dir / f"ckpt_iter{m.iteration}.npz")
                if log is not None:
                    log(m)
        save_checkpoint(trainer, final_ckpt)
    except BaseException as exc:
        manifest["status"] = "failed"
        manifest["finished_at"] = _now()
        manifest["error"] = repr(exc)
        _write_manifest(manifest_path, manifest)
        raise

    manifest["status"] = "complete"
    manifest["finished_at"] = _now()
    _write_manifest(manifest_path, manifest)
    return out_dir


class ActorPolicy:
    """Frozen checkpointed actor as a deployable policy callable."""

    def __init__(self, meta: dict, arrays: dict, seed: int = 0, greedy: bool = False):
        self.actor = build_actor(meta, arrays)
        self.obs_scale = float(meta["obs_scale"])
        self.greedy = greedy
        self._generator = torch.Generator().manual_seed(int(seed))
        self._rng = np.random.default_rng(seed)

    def __call__(self, vaoi: np.ndarray) -> int:
        obs = torch.as_tensor(
            np.asarray(vaoi, dtype=np.float32) / self.obs_scale
        ).unsqueeze(0)
        with torch.no_grad():
            probs = self.actor.action_distribution(obs, self._generator)[0]
        p = probs.double().numpy()
        if self.greedy:
            return int(p.argmax())
        p = np.clip(p, 0.0, None)
        p /= p.sum()
        return int(self._rng.choice(p.size, p=p))


def deploy_policy(
    policy,
    env_config: EnvConfig,
    slots: int,
    seed: int,
) -> dict:
    """Run a fixed policy and record the full trace.

    Returns arrays: vaoi (slots, N), actions, successes, costs, and the
    running average cost after each slot.
    """
    if slots < 1:
        raise ValueError(f"slots must be >= 1, got {slots}")
    env = StatusUpdateEnv(env_config, seed=seed)
    n = env_config.n_users
    vaoi = np.empty((slots, n), dtype=np.int64)
    actions = np.empty(slots, dtype=np.int64)
    successes = np.zeros(slots, dtype=bool)
    state = env.vaoi
    for t in range(slots):
        a = int(policy(state))
        out = env.step(a)
        state = out.next_state.vaoi
        vaoi[t] = state
        actions[t] = a
        successes[t] = out.info["success"]
    costs = (actions != 0).astype(np.int64)
    eta_series = np.cumsum(costs) / np.arange(1, slots + 1)
    return {
        "vaoi": vaoi,
        "actions": actions,
        "successes": successes,
        "costs": costs,
        "eta_series": eta_series,
    }


def summarize_trace(trace: dict, alphas, eta_max: float) -> dict:
    pooled = trace["vaoi"].ravel()
    eta_final = average_cost(trace["actions"])
    return {
        "avg_vaoi": average_vaoi(trace["vaoi"]),
        "cvar": {str(a): empirical_cvar(pooled, a) for a in alphas},
        "avg_cost": eta_final,
        "eta_final": eta_final,
        "constraint_satisfied": bool(eta_final <= eta_max),
        "slots": int(trace["actions"].size),
    }


def _write_trace_csv(path: Path, trace: dict, n_users: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t", "action", "success", "cost", "eta_running"]
            + [f"vaoi_{i + 1}" for i in range(n_users)]
        )
        for t in range(trace["actions"].size):
            writer.writerow(
                [
                    t + 1,
                    int(trace["actions"][t]),
                    int(trace["successes"][t]),
                    int(trace["costs"][t]),
                    repr(float(trace["eta_series"][t])),
                ]
                + [int(v) for v in trace["vaoi"][t]]
            )


def _mean_summary(per_seed: list[dict], alphas) -> dict:
    return {
        "avg_vaoi": float(np.mean([r["avg_vaoi"] for r in per_seed])),
        "cvar": {
            str(a): float(np.mean([r["cvar"][str(a)] for r in per_seed])) for a in alphas
        },
        "avg_cost": float(np.mean([r["avg_cost"] for r in per_seed])),
    }


def evaluate_checkpoint(
    ckpt_path,
    slots: int = 5000,
    seeds=(0,),
    alphas=(0.75,),
    out_dir=None,
    greedy: bool = False,
    env_config: EnvConfig | None = None,
) -> dict:
    """Deploy a checkpointed policy for `slots` slots per evaluation seed.

    Writes eval.json, samples.csv (pooled per-slot ages), and one trace CSV
    per seed when out_dir is given. Raises if a supplied env disagrees with
    the checkpoint's user count.
    """
    meta, arrays = load_checkpoint(ckpt_path)
    ck_env = meta["env_config"]
    if env_config is None:
        env_config = EnvConfig(
            n_users=ck_env["n_users"],
            arrival_rates=tuple(ck_env["arrival_rates"]),
            success_prob=ck_env["success_prob"],
            d_max=ck_env["d_max"],
            eta_max=ck_env["eta_max"],
        )
    elif env_config.n_users != meta["n_users"]:
        raise ValueError(
            f"checkpoint was trained with {meta['n_users']} users but the requested "
            f"environment has {env_config.n_users}"
        )

    per_seed = []
    traces = {}
    for s in seeds:
        policy = ActorPolicy(meta, arrays, seed=s, greedy=greedy)
        trace = deploy_policy(policy, env_config, slots, seed=s)
        summary = summarize_trace(trace, alphas, env_config.eta_max)
        summary["seed"] = int(s)
        per_seed.append(summary)
        traces[int(s)] = trace

    report = {
        "checkpoint": str(ckpt_path),
        "algo": meta["algo"],
        "slots": slots,
        "alphas": [float(a) for a in alphas],
        "greedy": greedy,
        "eta_max": env_config.eta_max,
        "runs": per_seed,
        "mean": _mean_summary(per_seed, alphas),
    }

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "eval.json").write_text(json.dumps(report, indent=2))
        with open(out_dir / "samples.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["seed", "t"] + [f"vaoi_{i + 1}" for i in range(env_config.n_users)]
            )
            for s, trace in traces.items():
                for t in range(trace["actions"].size):
                    writer.writerow([s, t + 1] + [int(v) for v in trace["vaoi"][t]])
        for s, trace in traces.items():
            _write_trace_csv(out_dir / f"trace_seed{s}.csv", trace, env_config.n_users)
    return report


def evaluate_heuristic(
    kind: str,
    env_config: EnvConfig,
    slots: int = 5000,
    seeds=(0,),
    alphas=(0.75,),
) -> dict:
    """Evaluate a named heuristic policy with the same protocol as checkpoints."""
    per_seed = []
    for s in seeds:
        policy = make_heuristic(kind, env_config.eta_max, env_config.n_users, seed=s)
        trace = deploy_policy(policy, env_config, slots, seed=s)
        summary = summarize_trace(trace, alphas, env_config.eta_max)
        summary["seed"] = int(s)
        per_seed.append(summary)
    return {
        "algo": kind,
        "slots": slots,
        "alphas": [float(a) for a in alphas],
        "eta_max": env_config.eta_max,
        "runs": per_seed,
        "mean": _mean_summary(per_seed, alphas),
    }
