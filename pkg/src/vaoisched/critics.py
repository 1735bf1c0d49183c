"""Value networks: scalar double critics and quantile distributional critics.

Scalar critics map a state to one Q-value per action. Quantile critics map
a state to a set of quantile locations per action representing the return
distribution as a uniform mixture of Dirac masses; the mean recovers the
usual Q-value and a lower-tail average gives the CVaR-based risk value.
"""

from __future__ import annotations

import torch
from torch import nn

from .env import ConfigError


class ScalarCritic(nn.Module):
    """State -> vector of per-action Q-values."""

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

    def forward(self, state: torch.Tensor) -> torch.Tensor:
        return self.body(state)


class QuantileCritic(nn.Module):
    """State -> (n_actions, n_quantiles) quantile locations.

    No monotonicity is enforced across quantile indices; crossings are left
    uncorrected, as is conventional for quantile-regression critics.
    """

    def __init__(self, n_state: int, n_actions: int, n_quantiles: int = 64, hidden: int = 256):
        super().__init__()
        if n_quantiles < 1:
            raise ConfigError(f"n_quantiles must be >= 1, got {n_quantiles}")
        self.n_actions = n_actions
        self.n_quantiles = n_quantiles
        self.body = nn.Sequential(
            nn.Linear(n_state, hidden),
            nn.Mish(),
            nn.Linear(hidden, hidden),
            nn.Mish(),
            nn.Linear(hidden, n_actions * n_quantiles),
        )

    def forward(self, state: torch.Tensor) -> torch.Tensor:
        out = self.body(state)
        return out.view(*state.shape[:-1], self.n_actions, self.n_quantiles)


def quantile_midpoints(n_quantiles: int, dtype=torch.float32, device=None) -> torch.Tensor:
    """Midpoints (2j - 1) / (2 * n_quantiles), j = 1..n_quantiles."""
    j = torch.arange(1, n_quantiles + 1, dtype=dtype, device=device)
    return (2.0 * j - 1.0) / (2.0 * n_quantiles)


def min_q(state: torch.Tensor, critic1: ScalarCritic, critic2: ScalarCritic) -> torch.Tensor:
    """Elementwise minimum of the two critics' per-action values."""
    q1 = critic1(state)
    q2 = critic2(state)
    if q1.shape != q2.shape:
        raise ValueError(f"critic output shapes differ: {tuple(q1.shape)} vs {tuple(q2.shape)}")
    return torch.minimum(q1, q2)


def merged_quantiles(state: torch.Tensor, critic1: QuantileCritic, critic2: QuantileCritic) -> torch.Tensor:
    """Per-index minimum of two quantile critics, all actions."""
    z1 = critic1(state)
    z2 = critic2(state)
    if z1.shape != z2.shape:
        raise ValueError(f"critic output shapes differ: {tuple(z1.shape)} vs {tuple(z2.shape)}")
    return torch.minimum(z1, z2)


def target_quantiles(
    next_state: torch.Tensor,
    next_action: torch.Tensor,
    tcritic1: QuantileCritic,
    tcritic2: QuantileCritic,
) -> torch.Tensor:
    """Quantiles of the merged target distribution at (s', a')."""
    merged = merged_quantiles(next_state, tcritic1, tcritic2)
    if merged.dim() == 2:  # unbatched (n_actions, n_quantiles)
        return merged[int(next_action)]
    idx = next_action.long().view(-1, 1, 1).expand(-1, 1, merged.shape[-1])
    return merged.gather(-2, idx).squeeze(-2)


def quantile_huber_loss(
    pred: torch.Tensor,
    targets: torch.Tensor,
    kappa: float = 1.0,
    taus: torch.Tensor | None = None,
) -> torch.Tensor:
    """Quantile-regression Huber loss over all (pred, target) quantile pairs.

    pred and targets have shape (..., n_quantiles); the loss for each
    leading element is (1/n) * sum_j sum_j' rho_{tau_j}(target_j' - pred_j)
    and the result is the mean over leading dimensions.
    """
    if kappa <= 0:
        raise ConfigError(f"kappa must be positive, got {kappa}")
    n = pred.shape[-1]
    if targets.shape[-1] != n:
        raise ValueError(
            f"pred has {n} quantiles but targets has {targets.shape[-1]}"
        )
    if taus is None:
        taus = quantile_midpoints(n, dtype=pred.dtype, device=pred.device)
    # u[..., j, j'] = target_j' - pred_j
    u = targets.unsqueeze(-2) - pred.unsqueeze(-1)
    abs_u = u.abs()
    huber = torch.where(abs_u <= kappa, 0.5 * u * u, kappa * (abs_u - 0.5 * kappa))
    weight = (taus.view(*([1] * (u.dim() - 2)), n, 1) - (u < 0).to(u.dtype)).abs()
    per_element = (weight * huber).sum(dim=(-2, -1)) / n
    return per_element.mean()


def mean_from_quantiles(quantiles: torch.Tensor) -> torch.Tensor:
    """Q-value as the mean of the quantile locations."""
    return quantiles.mean(dim=-1)


def cvar_from_quantiles(quantiles: torch.Tensor, varphi: float) -> torch.Tensor:
    """Lower-tail average of the quantile locations at risk level varphi.

    Averages the quantile values whose midpoints are <= varphi. When even
    the lowest midpoint exceeds varphi, the single lowest-midpoint quantile
    is used so the value is always defined. varphi = 1 includes every
    midpoint and recovers the mean.
    """
    if not (0.0 < varphi <= 1.0):
        raise ConfigError(f"varphi must lie in (0, 1], got {varphi}")
    n = quantiles.shape[-1]
    taus = quantile_midpoints(n, dtype=quantiles.dtype, device=quantiles.device)
    mask = taus <= varphi
    if not bool(mask.any()):
        mask = torch.zeros_like(mask)
        mask[0] = True
    count = int(mask.sum())
    return (quantiles * mask.to(quantiles.dtype)).sum(dim=-1) / count
