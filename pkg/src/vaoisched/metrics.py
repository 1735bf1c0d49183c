"""Post-hoc evaluation metrics: average version age, tail risk, transmission cost.

The tail metric is the conditional value-at-risk of the version-age samples
pooled across users and time. It is computed two independent ways, as the
minimum of the convex value-at-risk objective and as an exact fractional
tail average, and the two are asserted to agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EvalTrace:
    """Deployment trace: per-slot per-user age matrix plus the action sequence."""

    vaoi: np.ndarray  # (slots, n_users)
    actions: np.ndarray  # (slots,)


def _as_samples(trace) -> np.ndarray:
    if isinstance(trace, EvalTrace):
        return np.asarray(trace.vaoi, dtype=np.float64)
    return np.asarray(trace, dtype=np.float64)


def average_vaoi(trace) -> float:
    """Mean version age over all slots and users."""
    samples = _as_samples(trace)
    if samples.size == 0:
        raise ValueError("cannot average an empty trace")
    return float(samples.mean())


def average_cost(actions) -> float:
    """Fraction of slots with a transmission (non-idle action)."""
    if isinstance(actions, EvalTrace):
        actions = actions.actions
    actions = np.asarray(actions)
    if actions.size == 0:
        raise ValueError("cannot average an empty action sequence")
    return float(np.mean(actions != 0))


def _cvar_tail_average(samples: np.ndarray, alpha: float) -> float:
    # Exact mean of the worst (1 - alpha) fraction, with the boundary
    # sample weighted fractionally.
    m = samples.size
    k = (1.0 - alpha) * m
    desc = np.sort(samples)[::-1]
    whole = int(np.floor(k))
    total = float(desc[:whole].sum())
    frac = k - whole
    if frac > 1e-15 and whole < m:
        total += frac * float(desc[whole])
    return total / k

def _cvar_ru_minimum(samples: np.ndarray, alpha: float) -> float:
    # min over z of z + E[(x - z)+] / (1 - alpha). The objective is convex
    # and piecewise linear with kinks only at sample values, so scanning
    # the unique sample values finds the exact minimum.
    m = samples.size
    z = np.unique(samples)
    excess = np.clip(samples[None, :] - z[:, None], 0.0, None).sum(axis=1)
    objective = z + excess / ((1.0 - alpha) * m)
    return float(objective.min())


def empirical_cvar(samples, alpha: float) -> float:
    """CVaR at confidence alpha of the pooled sample set.

    Both the variational form and the direct fractional-tail average are
    evaluated; disagreement beyond numerical tolerance raises, guarding the
    implementation against itself.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    samples = _as_samples(samples).ravel()
    if samples.size == 0:
        raise ValueError("cannot compute CVaR of an empty sample set")

    tail = _cvar_tail_average(samples, alpha)
    ru = _cvar_ru_minimum(samples, alpha)
    tol = 1e-9 * max(1.0, abs(tail))
    if abs(tail - ru) > tol:
        raise AssertionError(
            f"CVaR implementations disagree: tail={tail!r} vs variational={ru!r}"
        )
    return tail
