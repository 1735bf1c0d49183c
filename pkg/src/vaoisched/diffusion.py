"""Diffusion-based generative policy for discrete scheduling actions.

A variance-preserving noise schedule drives a K-step reverse denoising
chain. The noise predictor is conditioned on the system state and a
sinusoidal embedding of the step index; its output is tanh-bounded. The
final denoised vector is mapped to action probabilities with a softmax.
The plain MLP policy used by the non-diffusion ablations lives here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .env import ConfigError

# Floor applied inside logarithms of probabilities.
PROB_FLOOR = 1e-8


@dataclass(frozen=True)
class DiffusionSchedule:
    """Precomputed noise-schedule tables for a K-step chain.

    Arrays are indexed by step-1 (step k in 1..K maps to index k-1).
    beta_tilde[0] is exactly zero: the last denoising step is deterministic.
    """

    n_steps: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_tilde: np.ndarray
    beta_min: float
    beta_max: float


def build_schedule(n_steps: int, beta_min: float = 0.1, beta_max: float = 10.0) -> DiffusionSchedule:
    """Variance-preserving schedule.

    beta_k = 1 - exp(-beta_min/K - (2k-1)/(2K^2) * (beta_max - beta_min))
    """
    if n_steps < 1:
        raise ConfigError(f"n_steps must be >= 1, got {n_steps}")
    if not (0.0 < beta_min <= beta_max):
        raise ConfigError(
            f"need 0 < beta_min <= beta_max, got beta_min={beta_min}, beta_max={beta_max}"
        )
    k = np.arange(1, n_steps + 1, dtype=np.float64)
    beta = 1.0 - np.exp(-beta_min / n_steps - (2.0 * k - 1.0) / (2.0 * n_steps**2) * (beta_max - beta_min))
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    alpha_bar_prev = np.concatenate(([1.0], alpha_bar[:-1]))
    beta_tilde = (1.0 - alpha_bar_prev) / (1.0 - alpha_bar) * beta
    return DiffusionSchedule(
        n_steps=n_steps,
        beta=beta,
        alpha=alpha,
        alpha_bar=alpha_bar,
        beta_tilde=beta_tilde,
        beta_min=float(beta_min),
        beta_max=float(beta_max),
    )


def _check_step(k: int, schedule: DiffusionSchedule) -> None:
    if not (1 <= k <= schedule.n_steps):
        raise ValueError(f"step k must lie in [1, {schedule.n_steps}], got {k}")


def reconstruct_x0(x_k: torch.Tensor, k: int, state: torch.Tensor, net, schedule: DiffusionSchedule) -> torch.Tensor:
    """Estimate the clean sample from the step-k noisy sample."""
    _check_step(k, schedule)
    eps = net(x_k, k, state)
    ab = float(schedule.alpha_bar[k - 1])
    return x_k / math.sqrt(ab) - math.sqrt(1.0 / ab - 1.0) * eps


def posterior_mean(x_k: torch.Tensor, k: int, state: torch.Tensor, net, schedule: DiffusionSchedule) -> torch.Tensor:
    """Mean of the reverse transition at step k (bounded-noise form)."""
    _check_step(k, schedule)
    eps = net(x_k, k, state)
    a = float(schedule.alpha[k - 1])
    b = float(schedule.beta[k - 1])
    ab = float(schedule.alpha_bar[k - 1])
    return (x_k - b / math.sqrt(1.0 - ab) * eps) / math.sqrt(a)


def posterior_mean_from_x0(x_k: torch.Tensor, k: int, x0: torch.Tensor, schedule: DiffusionSchedule) -> torch.Tensor:
    """Mean of the reverse transition written as a combination of x_k and x0.

    Algebraically identical to posterior_mean; kept as a separate closed
    form so the two can be checked against each other.
    """
    _check_step(k, schedule)
    a = float(schedule.alpha[k - 1])
    b = float(schedule.beta[k - 1])
    ab = float(schedule.alpha_bar[k - 1])
    ab_prev = float(schedule.alpha_bar[k - 2]) if k > 1 else 1.0
    coef_xk = math.sqrt(a) * (1.0 - ab_prev) / (1.0 - ab)
    coef_x0 = math.sqrt(ab_prev) * b / (1.0 - ab)
    return coef_xk * x_k + coef_x0 * x0


def denoise_step(
    x_k: torch.Tensor,
    k: int,
    state: torch.Tensor,
    net,
    schedule: DiffusionSchedule,
    noise: torch.Tensor,
) -> torch.Tensor:
    """One reverse step: x_{k-1} = mu(x_k, k, s) + sqrt(beta_tilde_k) * noise."""
    if noise.shape != x_k.shape:
        raise ValueError(f"noise shape {tuple(noise.shape)} != sample shape {tuple(x_k.shape)}")
    mu = posterior_mean(x_k, k, state, net, schedule)
    std = math.sqrt(float(schedule.beta_tilde[k - 1]))
    return mu + std * noise


def run_denoising_chain(
    state: torch.Tensor,
    net,
    schedule: DiffusionSchedule,
    x_init: torch.Tensor,
    step_noises: torch.Tensor,
) -> torch.Tensor:
    """Run the full chain x_K -> x_0.

    step_noises has shape (K, *x_init.shape); entry k-1 is the injected
    noise at step k (the k=1 entry is multiplied by zero variance).
    Gradients flow to the net parameters through every reverse mean.
    """
    x = x_init
    for k in range(schedule.n_steps, 0, -1):
        x = denoise_step(x, k, state, net, schedule, step_noises[k - 1])
    return x


def sample_action_distribution(
    state: torch.Tensor,
    net,
    schedule: DiffusionSchedule,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Draw the chain noise, denoise, and map x_0 to action probabilities."""
    batch_shape = state.shape[:-1]
    shape = batch_shape + (net.n_actions,)
    x_init = torch.randn(shape, generator=generator, dtype=state.dtype, device=state.device)
    step_noises = torch.randn(
        (schedule.n_steps,) + shape, generator=generator, dtype=state.dtype, device=state.device
    )
    x0 = run_denoising_chain(state, net, schedule, x_init, step_noises)
    return torch.softmax(x0, dim=-1)


def policy_entropy(probs: torch.Tensor) -> torch.Tensor:
    """Entropy -sum_i p_i log p_i with a probability floor inside the log."""
    logp = torch.log(probs.clamp(min=PROB_FLOOR))
    return -(probs * logp).sum(dim=-1)


class SinusoidalPosEmb(nn.Module):
    """Sinusoidal embedding of the diffusion step index."""

    def __init__(self, dim: int):
        super().__init__()
        if dim < 2 or dim % 2 != 0:
            raise ConfigError(f"embedding dim must be even and >= 2, got {dim}")
        self.dim = dim

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        half = self.dim // 2
        scale = math.log(10000.0) / (half - 1) if half > 1 else 1.0
        freqs = torch.exp(-scale * torch.arange(half, dtype=t.dtype, device=t.device))
        angles = t[..., None] * freqs
        return torch.cat([angles.sin(), angles.cos()], dim=-1)


class NoisePredictor(nn.Module):
    """Conditioned denoiser: (x_k, k, state) -> bounded noise estimate.

    The step index passes through a sinusoidal embedding and a small MLP;
    the result is concatenated with the noisy sample and the state and fed
    to the trunk. The tanh output keeps the estimate in (-1, 1).
    """

    def __init__(self, n_state: int, n_actions: int, hidden: int = 256, time_dim: int = 16):
        super().__init__()
        self.n_actions = n_actions
        self.time_mlp = nn.Sequential(
            SinusoidalPosEmb(time_dim),
            nn.Linear(time_dim, time_dim * 2),
            nn.Mish(),
            nn.Linear(time_dim * 2, time_dim),
        )
        self.trunk = nn.Sequential(
            nn.Linear(n_actions + n_state + time_dim, hidden),
            nn.Mish(),
            nn.Linear(hidden, hidden),
            nn.Mish(),
            nn.Linear(hidden, n_actions),
            nn.Tanh(),
        )

    def forward(self, x_k: torch.Tensor, k: int, state: torch.Tensor) -> torch.Tensor:
        t = torch.full(x_k.shape[:-1], float(k), dtype=x_k.dtype, device=x_k.device)
        emb = self.time_mlp(t)
        return self.trunk(torch.cat([x_k, state, emb], dim=-1))


class DiffusionPolicy(nn.Module):
    """Actor that samples an action distribution via the denoising chain."""

    def __init__(
        self,
        n_state: int,
        n_actions: int,
        schedule: DiffusionSchedule,
        hidden: int = 256,
        time_dim: int = 16,
    ):
        super().__init__()
        self.n_actions = n_actions
        self.schedule = schedule
        self.net = NoisePredictor(n_state, n_actions, hidden=hidden, time_dim=time_dim)

    def action_distribution(
        self, state: torch.Tensor, generator: torch.Generator | None = None
    ) -> torch.Tensor:
        return sample_action_distribution(state, self.net, self.schedule, generator)


class MlpPolicy(nn.Module):
    """Plain feed-forward softmax actor used by the non-diffusion ablations."""

    def __init__(self, n_state: int, n_actions: int, hidden: int = 256):
        super().__init__()
        self.n_actions = n_actions
        self.body = nn.Sequential(
            nn.Linear(n_state, hidden),
            nn.Mish(),
            nn.Linear(hidden, hidden),
            nn.Mish(),
            nn.Linear(hidden, n_actions),
        )

    def action_distribution(
        self, state: torch.Tensor, generator: torch.Generator | None = None
    ) -> torch.Tensor:
        # generator accepted for interface parity; sampling is noise-free
        return torch.softmax(self.body(state), dim=-1)
