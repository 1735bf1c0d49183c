"""Checkpoint container: named parameter arrays plus JSON metadata in one .npz.

Every network's state dict is flattened under a component prefix
(``actor.``, ``critic1.`` and so on) and stored as raw numpy arrays, so a
round trip is bit exact. Metadata carries everything needed to rebuild the
networks and the observation normalization: algorithm, user count, age
cap, chain length and noise endpoints, quantile count, and the env/train
configuration snapshots.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .agents import Trainer, TrainConfig
from .env import EnvConfig

FORMAT_VERSION = 1
_META_KEY = "__metadata__"


def _flatten(prefix: str, module: torch.nn.Module) -> dict:
    return {
        f"{prefix}.{name}": tensor.detach().cpu().numpy()
        for name, tensor in module.state_dict().items()
    }


def save_checkpoint(trainer: Trainer, path) -> Path:
    path = Path(path)
    meta = {
        "format_version": FORMAT_VERSION,
        "algo": trainer.algo,
        "n_users": trainer.env_config.n_users,
        "d_max": trainer.env_config.d_max,
        "obs_scale": float(trainer.env_config.d_max),
        "k_steps": trainer.config.k_steps,
        "beta_min": trainer.config.beta_min,
        "beta_max": trainer.config.beta_max,
        "n_quantiles": trainer.config.n_quantiles if trainer.is_distributional else None,
        "hidden": trainer.config.hidden,
        "time_embed_dim": trainer.config.time_embed_dim,
        "iteration": trainer.iteration,
        "seed": trainer.seed,
        "lagrange": {
            "lam": trainer.lagrange.lam,
            "eta": trainer.lagrange.eta,
            "steps": trainer.lagrange.steps,
        },
        "env_config": {
            "n_users": trainer.env_config.n_users,
            "arrival_rates": list(trainer.env_config.arrival_rates),
            "success_prob": trainer.env_config.success_prob,
            "d_max": trainer.env_config.d_max,
            "eta_max": trainer.env_config.eta_max,
        },
        "train_config": {k: getattr(trainer.config, k) for k in trainer.config.__dataclass_fields__},
    }
    arrays = {}
    arrays.update(_flatten("actor", trainer.actor))
    arrays.update(_flatten("critic1", trainer.critic1))
    arrays.update(_flatten("critic2", trainer.critic2))
    arrays.update(_flatten("target_actor", trainer.target_actor))
    arrays.update(_flatten("target_critic1", trainer.target_critic1))
    arrays.update(_flatten("target_critic2", trainer.target_critic2))
    arrays[_META_KEY] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> tuple[dict, dict]:
    """Load (metadata, arrays-by-name) from a checkpoint file."""
    path = Path(path)
    with np.load(path) as data:
        if _META_KEY not in data:
            raise ValueError(f"{path} is not a checkpoint (missing metadata entry)")
        meta = json.loads(bytes(data[_META_KEY]).decode("utf-8"))
        arrays = {k: data[k] for k in data.files if k != _META_KEY}
    return meta, arrays


def _component_state_dict(arrays: dict, prefix: str) -> dict:
    head = prefix + "."
    out = {
        name[len(head):]: torch.as_tensor(arr)
        for name, arr in arrays.items()
        if name.startswith(head)
    }
    if not out:
        raise ValueError(f"checkpoint has no arrays for component {prefix!r}")
    return out


def build_actor(meta: dict, arrays: dict, component: str = "actor"):
    """Rebuild the policy network recorded in a checkpoint."""
    from .diffusion import DiffusionPolicy, MlpPolicy, build_schedule

    n = meta["n_users"]
    n_actions = n + 1
    if meta["algo"] in ("d2sac", "rs_d3sac"):
        schedule = build_schedule(meta["k_steps"], meta["beta_min"], meta["beta_max"])
        actor = DiffusionPolicy(
            n, n_actions, schedule, hidden=meta["hidden"], time_dim=meta["time_embed_dim"]
        )
    else:
        actor = MlpPolicy(n, n_actions, hidden=meta["hidden"])
    actor.load_state_dict(_component_state_dict(arrays, component))
    actor.eval()
    return actor


def restore_trainer(path, device: str = "cpu") -> Trainer:
    """Rebuild a full trainer (networks, targets, dual state) from a checkpoint.

    Optimizer moments and the replay buffer are not checkpointed; restored
    trainers are intended for evaluation or fresh fine-tuning.
    """
    from .lagrange import LagrangeState

    meta, arrays = load_checkpoint(path)
    env_config = EnvConfig(
        n_users=meta["env_config"]["n_users"],
        arrival_rates=tuple(meta["env_config"]["arrival_rates"]),
        success_prob=meta["env_config"]["success_prob"],
        d_max=meta["env_config"]["d_max"],
        eta_max=meta["env_config"]["eta_max"],
    )
    train_config = TrainConfig(**meta["train_config"])
    trainer = Trainer(meta["algo"], env_config, train_config, seed=meta["seed"], device=device)
    for prefix, module in (
        ("actor", trainer.actor),
        ("critic1", trainer.critic1),
        ("critic2", trainer.critic2),
        ("target_actor", trainer.target_actor),
        ("target_critic1", trainer.target_critic1),
        ("target_critic2", trainer.target_critic2),
    ):
        module.load_state_dict(_component_state_dict(arrays, prefix))
    trainer.lagrange = LagrangeState(**meta["lagrange"])
    trainer.iteration = meta["iteration"]
    return trainer
