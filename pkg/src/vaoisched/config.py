"""Experiment configuration: env + training + evaluation settings.

Config files are TOML (sections [env], [train], [eval] plus top-level
keys) or JSON with the same structure. Defaults follow the reference
full-scale setup: 20 users, arrival rate 0.75, success probability 0.9,
cost budget 0.85, 5000-slot evaluations.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .agents import TrainConfig
from .env import ConfigError, EnvConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class EvalConfig:
    slots: int = 5000
    alphas: tuple = (0.75,)
    n_eval_seeds: int = 1
    greedy: bool = False

    def __post_init__(self):
        if self.slots < 1:
            raise ConfigError(f"eval slots must be >= 1, got {self.slots}")
        alphas = tuple(float(a) for a in self.alphas)
        if any(not (0.0 < a < 1.0) for a in alphas):
            raise ConfigError(f"CVaR alphas must lie in (0, 1), got {alphas}")
        object.__setattr__(self, "alphas", alphas)
        if self.n_eval_seeds < 1:
            raise ConfigError(f"n_eval_seeds must be >= 1, got {self.n_eval_seeds}")


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig = field(default_factory=lambda: EnvConfig(n_users=20))
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    iterations: int = 200
    seeds: tuple = (1, 2, 3)

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ConfigError("at least one seed is required")
        object.__setattr__(self, "seeds", seeds)

    def to_dict(self) -> dict:
        return {
            "env": dataclasses.asdict(self.env),
            "train": dataclasses.asdict(self.train),
            "eval": dataclasses.asdict(self.eval),
            "iterations": self.iterations,
            "seeds": list(self.seeds),
        }

    def replace(self, **kwargs) -> "ExperimentConfig":
        return dataclasses.replace(self, **kwargs)


def desk_profile() -> ExperimentConfig:
    """Laptop-scale profile: 5 users, 200 iterations, 3 seeds, 5000-slot eval.

    The per-iteration update count is raised so the networks see enough
    gradient steps within the short run; everything else keeps the
    full-scale hyperparameters.
    """
    return ExperimentConfig(
        env=EnvConfig(n_users=5, arrival_rates=(0.75,) * 5, success_prob=0.9, eta_max=0.85),
        train=TrainConfig(primal_updates=8),
        eval=EvalConfig(slots=5000, alphas=(0.5, 0.75, 0.9, 0.95)),
        iterations=200,
        seeds=(1, 2, 3),
    )


def full_profile() -> ExperimentConfig:
    """Full-scale profile (20 users). Compute-heavy; hours of training."""
    return ExperimentConfig(
        env=EnvConfig(n_users=20, arrival_rates=(0.75,) * 20, success_prob=0.9, eta_max=0.85),
        train=TrainConfig(),
        eval=EvalConfig(slots=5000, alphas=(0.75,)),
        iterations=1000,
        seeds=(1, 2, 3),
    )


PROFILES = {"desk": desk_profile, "full": full_profile}


def _build_from_sections(raw: dict) -> ExperimentConfig:
    known = {"env", "train", "eval", "iterations", "seeds", "profile"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    profile_name = raw.get("profile")
    if profile_name is not None and profile_name not in PROFILES:
        raise ConfigError(f"unknown profile {profile_name!r}, expected one of {sorted(PROFILES)}")
    base = PROFILES[profile_name]() if profile_name else ExperimentConfig()

    env_kwargs = dict(raw.get("env", {}))
    train_kwargs = dict(raw.get("train", {}))
    eval_kwargs = dict(raw.get("eval", {}))

    # n_users changes invalidate a stale per-user rate tuple from the base
    if "n_users" in env_kwargs and "arrival_rates" not in env_kwargs:
        env_kwargs["arrival_rates"] = (base.env.arrival_rates[0],)
    if "arrival_rates" in env_kwargs:
        rates = env_kwargs["arrival_rates"]
        env_kwargs["arrival_rates"] = tuple(rates) if not isinstance(rates, (int, float)) else rates
    env = dataclasses.replace(base.env, **env_kwargs) if env_kwargs else base.env
    train = dataclasses.replace(base.train, **train_kwargs) if train_kwargs else base.train
    if eval_kwargs and "alphas" in eval_kwargs:
        eval_kwargs["alphas"] = tuple(eval_kwargs["alphas"])
    eval_cfg = dataclasses.replace(base.eval, **eval_kwargs) if eval_kwargs else base.eval

    return ExperimentConfig(
        env=env,
        train=train,
        eval=eval_cfg,
        iterations=int(raw.get("iterations", base.iterations)),
        seeds=tuple(raw.get("seeds", base.seeds)),
    )


def load_config(path) -> ExperimentConfig:
    """Load an experiment configuration from a .toml or .json file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix.lower() == ".json":
        raw = json.loads(path.read_text())
    elif path.suffix.lower() == ".toml":
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    else:
        raise ConfigError(f"unsupported config format {path.suffix!r} (use .toml or .json)")
    try:
        return _build_from_sections(raw)
    except TypeError as exc:  # unexpected field names inside a section
        raise ConfigError(f"invalid config {path}: {exc}") from exc


def config_from_dict(raw: dict) -> ExperimentConfig:
    return _build_from_sections(raw)
