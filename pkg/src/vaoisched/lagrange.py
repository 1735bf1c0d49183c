"""Dual-variable bookkeeping for the long-term transmission-cost constraint."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class LagrangeState:
    """Multiplier, running average cost, and the global step counter.

    eta is the exact mean of every cost observed since initialization; the
    incremental form eta += (c - eta) / l keeps it so.
    """

    lam: float = 0.0
    eta: float = 0.0
    steps: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"multiplier must be nonnegative, got {self.lam}")
        if self.steps < 0:
            raise ValueError(f"step counter must be nonnegative, got {self.steps}")


def running_cost_update(ls: LagrangeState, cost: float) -> LagrangeState:
    """Fold one observed cost into the running average."""
    steps = ls.steps + 1
    eta = ls.eta + (cost - ls.eta) / steps
    return replace(ls, eta=eta, steps=steps)


def lagrange_update(ls: LagrangeState, eta_max: float, delta: float) -> LagrangeState:
    """Projected ascent on the dual: lam <- max(0, lam + delta * (eta - eta_max))."""
    if delta <= 0:
        raise ValueError(f"dual step size must be positive, got {delta}")
    lam = max(0.0, ls.lam + delta * (ls.eta - eta_max))
    return replace(ls, lam=lam)
