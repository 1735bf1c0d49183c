"""Hand-written baseline schedulers used as sanity envelopes."""

from __future__ import annotations

import numpy as np

HEURISTIC_KINDS = ("greedy_max_vaoi", "random_budget", "always_idle")


class GreedyMaxVaoi:
    """Transmit to the stalest user while the running cost allows it.

    Picks the argmax-age user (ties to the lowest index) whenever some age
    is positive and the running average cost so far is within the budget;
    otherwise idles.
    """

    def __init__(self, eta_max: float):
        self.eta_max = eta_max
        self._sent = 0
        self._slots = 0

    def __call__(self, vaoi: np.ndarray) -> int:
        vaoi = np.asarray(vaoi)
        running_cost = self._sent / self._slots if self._slots else 0.0
        if vaoi.max() > 0 and running_cost <= self.eta_max:
            action = int(vaoi.argmax()) + 1
        else:
            action = 0
        self._slots += 1
        self._sent += 1 if action != 0 else 0
        return action


class RandomBudget:
    """Transmit to a uniformly random user with probability eta_max."""

    def __init__(self, eta_max: float, n_users: int, seed: int = 0):
        self.eta_max = eta_max
        self.n_users = n_users
        self._rng = np.random.default_rng(seed)

    def __call__(self, vaoi: np.ndarray) -> int:
        if self._rng.random() < self.eta_max:
            return int(self._rng.integers(1, self.n_users + 1))
        return 0


def always_idle(vaoi) -> int:
    return 0


def make_heuristic(kind: str, eta_max: float, n_users: int, seed: int = 0):
    """Build a fresh policy callable of the given kind."""
    if kind == "greedy_max_vaoi":
        return GreedyMaxVaoi(eta_max)
    if kind == "random_budget":
        return RandomBudget(eta_max, n_users, seed=seed)
    if kind == "always_idle":
        return always_idle
    raise ValueError(f"unknown heuristic {kind!r}, expected one of {HEURISTIC_KINDS}")
