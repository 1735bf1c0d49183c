"""Multi-user wireless status-update environment with version-age bookkeeping.

A scheduler holds the freshest packet version per user (counter G), the
destination holds the last delivered version (counter B), and the version
age of user n at slot t is G(t,n) - B(t-1,n), observed truncated at d_max.
Each slot the scheduler transmits to at most one user over an unreliable
channel; transmitting incurs a unit cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class ConfigError(ValueError):
    """Raised for invalid environment or training configuration values."""


@dataclass(frozen=True)
class EnvConfig:
    """Static parameters of the status-update system.

    arrival_rates may be given as a scalar (shared by all users) or a
    per-user sequence; it is stored as a length-n_users tuple.
    """

    n_users: int
    arrival_rates: tuple = (0.75,)
    success_prob: float = 0.9
    d_max: int = 50
    eta_max: float = 0.85
    # Reward the post-transition version age instead of the decision-time
    # one. Off by default: the decision-time age is the literal reading.
    reward_on_next_state: bool = False

    def __post_init__(self):
        if self.n_users < 1:
            raise ConfigError(f"n_users must be >= 1, got {self.n_users}")
        rates = self.arrival_rates
        if np.isscalar(rates):
            rates = (float(rates),) * self.n_users
        else:
            rates = tuple(float(r) for r in rates)
            if len(rates) == 1 and self.n_users > 1:
                rates = rates * self.n_users
        if len(rates) != self.n_users:
            raise ConfigError(
                f"arrival_rates has length {len(rates)}, expected {self.n_users}"
            )
        if any(not (0.0 < r <= 1.0) for r in rates):
            raise ConfigError(f"arrival rates must lie in (0, 1], got {rates}")
        object.__setattr__(self, "arrival_rates", rates)
        if not (0.0 < self.success_prob <= 1.0):
            raise ConfigError(f"success_prob must lie in (0, 1], got {self.success_prob}")
        if self.d_max < 1:
            raise ConfigError(f"d_max must be >= 1, got {self.d_max}")
        if not (0.0 < self.eta_max <= 1.0):
            raise ConfigError(f"eta_max must lie in (0, 1], got {self.eta_max}")

    @property
    def n_actions(self) -> int:
        return self.n_users + 1

    @property
    def rates(self) -> np.ndarray:
        return np.asarray(self.arrival_rates, dtype=np.float64)


@dataclass(frozen=True)
class EnvState:
    """Snapshot of the environment at the start of a slot.

    vaoi is the truncated version-age vector min(G - B, d_max); G and B are
    the raw scheduler/destination version counters.
    """

    vaoi: np.ndarray
    scheduler_versions: np.ndarray
    destination_versions: np.ndarray
    slot_index: int

    def copy(self) -> "EnvState":
        return EnvState(
            vaoi=self.vaoi.copy(),
            scheduler_versions=self.scheduler_versions.copy(),
            destination_versions=self.destination_versions.copy(),
            slot_index=self.slot_index,
        )


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    reward: float
    cost: int
    info: dict = field(default_factory=dict)


def compute_reward(vaoi: Sequence[int], action: int, lam: float = 0.0) -> float:
    """Shaped one-slot reward: negative system age minus lam per transmission."""
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    return -float(np.sum(vaoi)) - lam * (1.0 if action != 0 else 0.0)


class StatusUpdateEnv:
    """Discrete-time simulator of the N-user status-update system.

    The observed state at slot t already reflects slot-t packet arrivals.
    step(action) resolves the slot-t transmission, computes the reward on
    the current state, draws slot-(t+1) arrivals and returns the next
    state. Deterministic given (config, seed, action sequence).
    """

    def __init__(self, config: EnvConfig, seed: int = 0):
        self.config = config
        self._rates = config.rates
        self._n = config.n_users
        self._d_max = config.d_max
        self._p = config.success_prob
        self.reset(seed)

    def reset(self, seed: Optional[int] = None) -> EnvState:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._g = np.zeros(self._n, dtype=np.int64)
        self._b = np.zeros(self._n, dtype=np.int64)
        self._t = 0
        return self.state

    @property
    def state(self) -> EnvState:
        raw = self._g - self._b
        return EnvState(
            vaoi=np.minimum(raw, self._d_max),
            scheduler_versions=self._g.copy(),
            destination_versions=self._b.copy(),
            slot_index=self._t,
        )

    @property
    def vaoi(self) -> np.ndarray:
        return np.minimum(self._g - self._b, self._d_max)

    def step(
        self,
        action: int,
        lam: float = 0.0,
        forced_success: Optional[bool] = None,
        forced_arrivals: Optional[Sequence[bool]] = None,
    ) -> StepOutcome:
        """Advance one slot.

        forced_success / forced_arrivals override the random draws (used to
        replay fixed traces); when provided, the corresponding random
        numbers are not consumed, so forced and unforced draws can be mixed
        deterministically.
        """
        if not (0 <= action <= self._n):
            raise ValueError(f"action must lie in [0, {self._n}], got {action}")

        vaoi_now = self.vaoi
        cost = 1 if action != 0 else 0

        success = False
        if action != 0:
            if forced_success is None:
                success = bool(self._rng.random() < self._p)
            else:
                success = bool(forced_success)
            if success:
                self._b[action - 1] = self._g[action - 1]

        if forced_arrivals is None:
            arrivals = self._rng.random(self._n) < self._rates
        else:
            arrivals = np.asarray(forced_arrivals, dtype=bool)
            if arrivals.shape != (self._n,):
                raise ValueError(
                    f"forced_arrivals must have length {self._n}, got {arrivals.shape}"
                )
        self._g[arrivals] += 1
        self._t += 1

        next_state = self.state
        reward_vaoi = next_state.vaoi if self.config.reward_on_next_state else vaoi_now
        reward = compute_reward(reward_vaoi, action, lam)

        info = {
            "arrivals": arrivals.copy(),
            "success": success,
            "raw_vaoi": self._g - self._b,
        }
        return StepOutcome(next_state=next_state, reward=reward, cost=cost, info=info)

    def rollout(
        self,
        policy: Callable[[np.ndarray], int],
        slots: int,
        lam: float = 0.0,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Run a fixed policy for `slots` steps.

        Returns (vaoi_samples, actions) where vaoi_samples[t] is the
        truncated age vector observed after step t (slots x n_users).
        """
        if slots < 1:
            raise ValueError(f"slots must be >= 1, got {slots}")
        vaoi_samples = np.empty((slots, self._n), dtype=np.int64)
        actions = np.empty(slots, dtype=np.int64)
        state = self.vaoi
        for t in range(slots):
            a = int(policy(state))
            out = self.step(a, lam=lam)
            state = out.next_state.vaoi
            vaoi_samples[t] = state
            actions[t] = a
        return vaoi_samples, actions
