"""Training loops for the four scheduler agents.

One parametric trainer covers all variants: the actor is either the
diffusion policy or a plain MLP, and the critics are either scalar double
critics or quantile distributional double critics whose lower-tail average
drives the actor. The transmission-cost constraint enters through a
Lagrange multiplier that shapes rewards at collection time and is updated
once per iteration from the running average cost.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .critics import (
    QuantileCritic,
    ScalarCritic,
    cvar_from_quantiles,
    merged_quantiles,
    min_q,
    quantile_huber_loss,
    target_quantiles,
)
from .diffusion import (
    PROB_FLOOR,
    DiffusionPolicy,
    MlpPolicy,
    build_schedule,
    policy_entropy,
)
from .env import ConfigError, EnvConfig, StatusUpdateEnv
from .lagrange import LagrangeState, lagrange_update, running_cost_update
from .replay import Batch, ReplayBuffer

ALGORITHMS = ("sac", "d2sac", "rs_dsac", "rs_d3sac")
DIFFUSION_ALGOS = ("d2sac", "rs_d3sac")
DISTRIBUTIONAL_ALGOS = ("rs_dsac", "rs_d3sac")


@dataclass(frozen=True)
class TrainConfig:
    actor_lr: float = 2e-4
    critic_lr: float = 2e-3
    psi: float = 0.05
    zeta: float = 0.005
    batch_size: int = 512
    gamma: float = 0.95
    k_steps: int = 5
    beta_min: float = 0.1
    beta_max: float = 10.0
    buffer_capacity: int = 5_000_000
    steps_per_iteration: int = 1000
    kappa: float = 1.0
    dual_step: float = 1.0
    n_quantiles: int = 64
    alpha: float = 0.75
    grad_clip: float = 10.0
    primal_updates: int = 1
    hidden: int = 256
    time_embed_dim: int = 16
    # Re-shape stored rewards with the current multiplier at sample time
    # instead of using the collection-time shaping.
    reshape_on_sample: bool = False

    def __post_init__(self):
        positives = {
            "actor_lr": self.actor_lr,
            "critic_lr": self.critic_lr,
            "psi": self.psi,
            "batch_size": self.batch_size,
            "k_steps": self.k_steps,
            "buffer_capacity": self.buffer_capacity,
            "steps_per_iteration": self.steps_per_iteration,
            "kappa": self.kappa,
            "dual_step": self.dual_step,
            "n_quantiles": self.n_quantiles,
            "grad_clip": self.grad_clip,
            "primal_updates": self.primal_updates,
            "hidden": self.hidden,
        }
        for name, value in positives.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if not (0.0 < self.gamma <= 1.0):
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not (0.0 < self.zeta < 1.0):
            raise ConfigError(f"zeta must lie in (0, 1), got {self.zeta}")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def varphi(self) -> float:
        """Risk level of the lower-tail return average: 1 - alpha."""
        return 1.0 - self.alpha


@dataclass
class IterationMetrics:
    iteration: int
    mean_reward: float
    lam: float
    eta: float
    critic_loss: float
    actor_loss: float
    wall_time: float
    extras: dict = field(default_factory=dict)


def soft_update(target: torch.nn.Module, online: torch.nn.Module, zeta: float) -> None:
    """Exponential moving average: target <- zeta * online + (1 - zeta) * target."""
    if not (0.0 <= zeta <= 1.0):
        raise ValueError(f"zeta must lie in [0, 1], got {zeta}")
    with torch.no_grad():
        for tp, op in zip(target.parameters(), online.parameters()):
            tp.mul_(1.0 - zeta).add_(op, alpha=zeta)


def td_target_scalar(
    rewards: torch.Tensor,
    next_states: torch.Tensor,
    target_actor,
    target_critics,
    gamma: float,
    psi: float,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Soft TD target built from the target actor and min-merged target critics."""
    with torch.no_grad():
        probs = target_actor.action_distribution(next_states, generator)
        qmin = min_q(next_states, target_critics[0], target_critics[1])
        soft_value = (probs * qmin).sum(dim=-1) + psi * policy_entropy(probs)
        return rewards + gamma * soft_value


def critic_loss_scalar(
    states: torch.Tensor,
    actions: torch.Tensor,
    targets: torch.Tensor,
    critic1: ScalarCritic,
    critic2: ScalarCritic,
) -> torch.Tensor:
    """Sum of both critics' squared TD errors, averaged over the batch."""
    if states.shape[0] == 0:
        raise ValueError("empty batch")
    idx = actions.long().unsqueeze(-1)
    y1 = critic1(states).gather(-1, idx).squeeze(-1)
    y2 = critic2(states).gather(-1, idx).squeeze(-1)
    return ((targets - y1) ** 2 + (targets - y2) ** 2).mean()


def actor_loss(
    states: torch.Tensor,
    actor,
    q_source,
    psi: float,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Negative soft objective -(pi^T q + psi * H(pi)), averaged over states.

    q_source is either a (batch, n_actions) tensor or a callable producing
    one; it is detached so only the actor receives gradient.
    """
    q = q_source(states) if callable(q_source) else q_source
    q = q.detach()
    probs = actor.action_distribution(states, generator)
    objective = (probs * q).sum(dim=-1) + psi * policy_entropy(probs)
    return -objective.mean()


def distributional_loss(
    states: torch.Tensor,
    actions: torch.Tensor,
    rewards: torch.Tensor,
    next_states: torch.Tensor,
    qcritics,
    target_actor,
    target_qcritics,
    gamma: float,
    psi: float,
    kappa: float,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Sum of both quantile critics' regression losses against the merged target.

    One next action per transition is sampled from the target policy; the
    target quantiles are the per-index minimum of the two target critics,
    shifted by the reward and the entropy bonus.
    """
    if states.shape[0] == 0:
        raise ValueError("empty batch")
    with torch.no_grad():
        probs = target_actor.action_distribution(next_states, generator)
        next_action = torch.multinomial(probs, 1, generator=generator).squeeze(-1)
        logp = torch.log(
            probs.gather(-1, next_action.unsqueeze(-1)).squeeze(-1).clamp(min=PROB_FLOOR)
        )
        tq = target_quantiles(next_states, next_action, target_qcritics[0], target_qcritics[1])
        targets = rewards.unsqueeze(-1) + gamma * (tq - psi * logp.unsqueeze(-1))

    idx = actions.long().view(-1, 1, 1)
    total = None
    for critic in qcritics:
        quantiles = critic(states)
        pred = quantiles.gather(-2, idx.expand(-1, 1, quantiles.shape[-1])).squeeze(-2)
        loss = quantile_huber_loss(pred, targets, kappa=kappa)
        total = loss if total is None else total + loss
    return total


class Trainer:
    """Owns the environment, networks, buffer, and dual state for one agent.

    Strictly sequential and deterministic given (algo, configs, seed): all
    randomness is derived from one seed via independent generators for the
    environment, action sampling, replay sampling, and chain noise.
    """

    def __init__(
        self,
        algo: str,
        env_config: EnvConfig,
        config: TrainConfig = TrainConfig(),
        seed: int = 0,
        device: str = "cpu",
    ):
        if algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {algo!r}, expected one of {ALGORITHMS}")
        self.algo = algo
        self.env_config = env_config
        self.config = config
        self.seed = seed
        self.device = torch.device(device)

        ss = np.random.SeedSequence(seed)
        env_seed, action_seed, buffer_seed, torch_seed = [
            int(s.generate_state(1)[0]) for s in ss.spawn(4)
        ]
        self.env = StatusUpdateEnv(env_config, seed=env_seed)
        self._action_rng = np.random.default_rng(action_seed)
        self._buffer_rng = np.random.default_rng(buffer_seed)
        self._generator = torch.Generator(device=self.device).manual_seed(torch_seed)
        torch.manual_seed(torch_seed)

        n = env_config.n_users
        n_actions = env_config.n_actions
        self._obs_scale = float(env_config.d_max)
        self.is_diffusion = algo in DIFFUSION_ALGOS
        self.is_distributional = algo in DISTRIBUTIONAL_ALGOS

        if self.is_diffusion:
            self.schedule = build_schedule(config.k_steps, config.beta_min, config.beta_max)
            self.actor = DiffusionPolicy(
                n, n_actions, self.schedule, hidden=config.hidden, time_dim=config.time_embed_dim
            )
        else:
            self.schedule = None
            self.actor = MlpPolicy(n, n_actions, hidden=config.hidden)
        if self.is_distributional:
            self.critic1 = QuantileCritic(n, n_actions, config.n_quantiles, hidden=config.hidden)
            self.critic2 = QuantileCritic(n, n_actions, config.n_quantiles, hidden=config.hidden)
        else:
            self.critic1 = ScalarCritic(n, n_actions, hidden=config.hidden)
            self.critic2 = ScalarCritic(n, n_actions, hidden=config.hidden)
        for module in (self.actor, self.critic1, self.critic2):
            module.to(self.device)

        self.target_actor = copy.deepcopy(self.actor)
        self.target_critic1 = copy.deepcopy(self.critic1)
        self.target_critic2 = copy.deepcopy(self.critic2)
        for module in (self.target_actor, self.target_critic1, self.target_critic2):
            for p in module.parameters():
                p.requires_grad_(False)

        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=config.actor_lr)
        self.critic_opt = torch.optim.Adam(
            list(self.critic1.parameters()) + list(self.critic2.parameters()),
            lr=config.critic_lr,
        )

        self.buffer = ReplayBuffer(config.buffer_capacity, n)
        self.lagrange = LagrangeState()
        self.iteration = 0
        self._state = self.env.vaoi

    # ------------------------------------------------------------------
    # helpers

    def _to_obs(self, vaoi: np.ndarray) -> torch.Tensor:
        obs = np.asarray(vaoi, dtype=np.float32) / self._obs_scale
        return torch.as_tensor(obs, device=self.device)

    def select_action(self, vaoi: np.ndarray) -> int:
        """Sample one action from the current policy."""
        with torch.no_grad():
            probs = self.actor.action_distribution(
                self._to_obs(vaoi).unsqueeze(0), self._generator
            )[0]
        p = probs.double().cpu().numpy()
        p = np.clip(p, 0.0, None)
        p /= p.sum()
        return int(self._action_rng.choice(p.size, p=p))

    def _q_for_actor(self, states: torch.Tensor) -> torch.Tensor:
        """Per-action values guiding the actor: min of scalar critics, or the
        lower-tail average of the min-merged quantile critics."""
        if self.is_distributional:
            merged = merged_quantiles(states, self.critic1, self.critic2)
            return cvar_from_quantiles(merged, self.config.varphi)
        return min_q(states, self.critic1, self.critic2)

    def _update_critics(self, batch: Batch) -> float:
        cfg = self.config
        states = self._to_obs(batch.states)
        next_states = self._to_obs(batch.next_states)
        actions = torch.as_tensor(batch.actions, device=self.device)
        if cfg.reshape_on_sample:
            rewards_np = -batch.vaoi_sums - self.lagrange.lam * batch.costs
        else:
            rewards_np = batch.rewards
        rewards = torch.as_tensor(rewards_np, device=self.device)

        if self.is_distributional:
            loss = distributional_loss(
                states,
                actions,
                rewards,
                next_states,
                (self.critic1, self.critic2),
                self.target_actor,
                (self.target_critic1, self.target_critic2),
                cfg.gamma,
                cfg.psi,
                cfg.kappa,
                self._generator,
            )
        else:
            targets = td_target_scalar(
                rewards,
                next_states,
                self.target_actor,
                (self.target_critic1, self.target_critic2),
                cfg.gamma,
                cfg.psi,
                self._generator,
            )
            loss = critic_loss_scalar(states, actions, targets, self.critic1, self.critic2)

        self.critic_opt.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(
            list(self.critic1.parameters()) + list(self.critic2.parameters()), cfg.grad_clip
        )
        self.critic_opt.step()
        return float(loss.detach())

    def _update_actor(self, batch: Batch) -> float:
        cfg = self.config
        states = self._to_obs(batch.states)
        with torch.no_grad():
            q = self._q_for_actor(states)
        loss = actor_loss(states, self.actor, q, cfg.psi, self._generator)
        self.actor_opt.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(self.actor.parameters(), cfg.grad_clip)
        self.actor_opt.step()
        return float(loss.detach())

    def _soft_updates(self) -> None:
        zeta = self.config.zeta
        soft_update(self.target_actor, self.actor, zeta)
        soft_update(self.target_critic1, self.critic1, zeta)
        soft_update(self.target_critic2, self.critic2, zeta)

    # ------------------------------------------------------------------
    # training

    def run_iteration(self) -> IterationMetrics:
        """Collect transitions, update the dual variable, then the networks."""
        cfg = self.config
        t0 = time.perf_counter()
        rewards = np.empty(cfg.steps_per_iteration, dtype=np.float64)

        state = self._state
        for t in range(cfg.steps_per_iteration):
            action = self.select_action(state)
            out = self.env.step(action, lam=self.lagrange.lam)
            next_state = out.next_state.vaoi
            self.buffer.push(
                state, action, next_state, out.reward, out.cost, float(np.sum(state))
            )
            self.lagrange = running_cost_update(self.lagrange, out.cost)
            rewards[t] = out.reward
            state = next_state
        self._state = state

        self.lagrange = lagrange_update(self.lagrange, self.env_config.eta_max, cfg.dual_step)

        critic_losses = []
        actor_losses = []
        if len(self.buffer) >= cfg.batch_size:
            for _ in range(cfg.primal_updates):
                batch = self.buffer.sample(cfg.batch_size, self._buffer_rng)
                critic_losses.append(self._update_critics(batch))
                actor_losses.append(self._update_actor(batch))
                self._soft_updates()

        self.iteration += 1
        return IterationMetrics(
            iteration=self.iteration,
            mean_reward=float(rewards.mean()),
            lam=self.lagrange.lam,
            eta=self.lagrange.eta,
            critic_loss=float(np.mean(critic_losses)) if critic_losses else float("nan"),
            actor_loss=float(np.mean(actor_losses)) if actor_losses else float("nan"),
            wall_time=time.perf_counter() - t0,
        )

    def train(self, iterations: int, on_iteration=None) -> list[IterationMetrics]:
        history = []
        for _ in range(iterations):
            metrics = self.run_iteration()
            history.append(metrics)
            if on_iteration is not None:
                on_iteration(metrics)
        return history
