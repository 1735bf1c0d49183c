"""Exact brute-force references for small instances.

The truncated per-user age process is Markov: on a successful transmission
the next age is just the fresh-arrival indicator, otherwise the age grows
by the arrival indicator and saturates at the cap. Enumerating the joint
age vector therefore gives the exact chain, against which the simulator,
the metrics, and the learned policies can be cross-checked.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .env import ConfigError, EnvConfig, StatusUpdateEnv
from .metrics import empirical_cvar


class OracleNumericalError(RuntimeError):
    """Raised when a stationary solve or value iteration fails to converge."""


@dataclass(frozen=True)
class SmallInstance:
    """Enumerable instance: joint state space of size (d_max + 1) ** n_users."""

    n_users: int
    arrival_rates: tuple
    success_prob: float
    d_max: int
    gamma: float = 0.95
    lam: float = 0.0

    def __post_init__(self):
        if not (1 <= self.n_users <= 2):
            raise ConfigError(f"exact enumeration supports 1 or 2 users, got {self.n_users}")
        if not (1 <= self.d_max <= 6):
            raise ConfigError(f"exact enumeration supports d_max <= 6, got {self.d_max}")
        rates = self.arrival_rates
        if np.isscalar(rates):
            rates = (float(rates),) * self.n_users
        else:
            rates = tuple(float(r) for r in rates)
        if len(rates) != self.n_users:
            raise ConfigError("arrival_rates length must equal n_users")
        object.__setattr__(self, "arrival_rates", rates)
        if not (0.0 <= self.gamma < 1.0):
            raise ConfigError(f"gamma must lie in [0, 1) for exact solves, got {self.gamma}")
        if self.lam < 0:
            raise ConfigError(f"lam must be nonnegative, got {self.lam}")

    @property
    def n_actions(self) -> int:
        return self.n_users + 1

    def env_config(self) -> EnvConfig:
        return EnvConfig(
            n_users=self.n_users,
            arrival_rates=self.arrival_rates,
            success_prob=self.success_prob,
            d_max=self.d_max,
        )


def enumerate_states(instance: SmallInstance) -> np.ndarray:
    """All age vectors in lexicographic order, shape (S, n_users)."""
    axes = [range(instance.d_max + 1)] * instance.n_users
    return np.array(list(itertools.product(*axes)), dtype=np.int64)


def state_index(instance: SmallInstance, vaoi) -> int:
    idx = 0
    for d in vaoi:
        idx = idx * (instance.d_max + 1) + int(d)
    return idx


def _user_next_distribution(d: int, scheduled: bool, r: float, p: float, d_max: int):
    """Distribution of one user's next age given its current age.

    Mirrors the simulator slot order: resolve the transmission on the
    current version gap, then add the next slot's arrival, then truncate.
    """
    outcomes = {}

    def add(nd, prob):
        outcomes[nd] = outcomes.get(nd, 0.0) + prob

    for arrival, pa in ((1, r), (0, 1.0 - r)):
        grown = min(d + arrival, d_max)
        if scheduled:
            add(arrival, p * pa)  # success: gap closed before the arrival
            add(grown, (1.0 - p) * pa)
        else:
            add(grown, pa)
    return outcomes


def transition_model(instance: SmallInstance) -> tuple[np.ndarray, np.ndarray]:
    """Dense transition tensor P[s, a, s'] and shaped reward R[s, a]."""
    states = enumerate_states(instance)
    n_states = states.shape[0]
    n_actions = instance.n_actions
    p_mat = np.zeros((n_states, n_actions, n_states), dtype=np.float64)
    rewards = np.zeros((n_states, n_actions), dtype=np.float64)

    for s_idx, vaoi in enumerate(states):
        for a in range(n_actions):
            rewards[s_idx, a] = -float(vaoi.sum()) - instance.lam * (1.0 if a != 0 else 0.0)
            per_user = [
                _user_next_distribution(
                    int(vaoi[n]),
                    scheduled=(a == n + 1),
                    r=instance.arrival_rates[n],
                    p=instance.success_prob,
                    d_max=instance.d_max,
                )
                for n in range(instance.n_users)
            ]
            for combo in itertools.product(*(d.items() for d in per_user)):
                next_vaoi = [c[0] for c in combo]
                prob = float(np.prod([c[1] for c in combo]))
                p_mat[s_idx, a, state_index(instance, next_vaoi)] += prob

    row_sums = p_mat.sum(axis=2)
    if not np.allclose(row_sums, 1.0, atol=1e-12):
        raise OracleNumericalError("transition rows do not sum to 1")
    return p_mat, rewards


def _policy_array(instance: SmallInstance, policy) -> np.ndarray:
    """Normalize a policy (callable on age vectors, dict, or array) to an index array."""
    states = enumerate_states(instance)
    if callable(policy):
        actions = np.array([int(policy(v)) for v in states], dtype=np.int64)
    else:
        actions = np.asarray(policy, dtype=np.int64)
        if actions.shape != (states.shape[0],):
            raise ValueError(
                f"policy array must have length {states.shape[0]}, got {actions.shape}"
            )
    if actions.min() < 0 or actions.max() >= instance.n_actions:
        raise ValueError("policy contains out-of-range actions")
    return actions


def stationary_distribution(p_pi: np.ndarray) -> np.ndarray:
    """Unique stationary distribution of a row-stochastic matrix."""
    n = p_pi.shape[0]
    eigvals = np.linalg.eigvals(p_pi.T)
    if np.sum(np.abs(eigvals - 1.0) < 1e-8) != 1:
        raise OracleNumericalError("chain has no unique stationary distribution")
    a = np.vstack([p_pi.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    if pi.min() < -1e-10:
        raise OracleNumericalError("stationary solve produced negative mass")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    residual = np.abs(pi @ p_pi - pi).max()
    if residual > 1e-9:
        raise OracleNumericalError(f"stationary residual too large: {residual}")
    return pi


def stationary_average_vaoi(instance: SmallInstance, policy) -> float:
    """Exact long-run average age (mean over users) of a fixed policy."""
    states = enumerate_states(instance)
    actions = _policy_array(instance, policy)
    p_mat, _ = transition_model(instance)
    p_pi = p_mat[np.arange(states.shape[0]), actions]
    pi = stationary_distribution(p_pi)
    return float(pi @ states.mean(axis=1))


def mc_cvar_oracle(
    instance: SmallInstance, policy, slots: int, alpha: float, seed: int = 0
) -> float:
    """Monte-Carlo CVaR of the pooled age samples under a fixed policy."""
    actions = _policy_array(instance, policy)
    env = StatusUpdateEnv(instance.env_config(), seed=seed)
    vaoi_samples, _ = env.rollout(
        lambda vaoi: actions[state_index(instance, vaoi)], slots
    )
    return empirical_cvar(vaoi_samples, alpha)


def solve_lagrangian_mdp(
    instance: SmallInstance, tol: float = 1e-10, max_iter: int = 2_000_000
) -> tuple[np.ndarray, np.ndarray]:
    """Value iteration on the enumerated shaped-reward MDP.

    Returns (greedy policy, value function); ties in the greedy extraction
    break toward the lower action index.
    """
    if not instance.gamma < 1.0:
        raise ConfigError("value iteration requires gamma < 1")
    p_mat, rewards = transition_model(instance)
    v = np.zeros(p_mat.shape[0])
    for _ in range(max_iter):
        q = rewards + instance.gamma * (p_mat @ v)
        v_new = q.max(axis=1)
        residual = np.abs(v_new - v).max()
        v = v_new
        if residual < tol:
            break
    else:
        raise OracleNumericalError(f"value iteration did not converge within {max_iter} sweeps")
    q = rewards + instance.gamma * (p_mat @ v)
    policy = q.argmax(axis=1)
    return policy, v


def evaluate_policy_exact(instance: SmallInstance, policy) -> np.ndarray:
    """Exact discounted value of a fixed policy via a linear solve."""
    actions = _policy_array(instance, policy)
    p_mat, rewards = transition_model(instance)
    s_idx = np.arange(p_mat.shape[0])
    p_pi = p_mat[s_idx, actions]
    r_pi = rewards[s_idx, actions]
    return np.linalg.solve(np.eye(p_mat.shape[0]) - instance.gamma * p_pi, r_pi)


def best_policy_by_enumeration(instance: SmallInstance) -> tuple[np.ndarray, np.ndarray]:
    """Best deterministic stationary policy by exhaustive exact evaluation.

    Iterates policies in lexicographic action order, so among co-optimal
    policies the one with the lowest action indices is returned, matching
    the value-iteration tie-break.
    """
    n_states = (instance.d_max + 1) ** instance.n_users
    n_policies = instance.n_actions**n_states
    if n_policies > 200_000:
        raise ConfigError(
            f"enumeration over {n_policies} policies is not supported; shrink the instance"
        )
    best_policy = None
    best_value = None
    for assignment in itertools.product(range(instance.n_actions), repeat=n_states):
        policy = np.array(assignment, dtype=np.int64)
        value = evaluate_policy_exact(instance, policy)
        if best_value is None or value.sum() > best_value.sum() + 1e-9:
            best_policy, best_value = policy, value
    return best_policy, best_value


def oracle_report(
    instance: SmallInstance,
    alphas=(0.75,),
    mc_slots: int = 200_000,
    seed: int = 0,
) -> dict:
    """JSON-friendly report: optimal policy, exact average age, CVaR estimates."""
    policy, value = solve_lagrangian_mdp(instance)
    states = enumerate_states(instance)
    avg = stationary_average_vaoi(instance, policy)
    cvar = {
        str(a): mc_cvar_oracle(instance, policy, slots=mc_slots, alpha=a, seed=seed)
        for a in alphas
    }
    return {
        "instance": {
            "n_users": instance.n_users,
            "arrival_rates": list(instance.arrival_rates),
            "success_prob": instance.success_prob,
            "d_max": instance.d_max,
            "gamma": instance.gamma,
            "lam": instance.lam,
        },
        "policy": [
            {"state": [int(d) for d in s], "action": int(a)} for s, a in zip(states, policy)
        ],
        "value_function": [float(x) for x in value],
        "average_vaoi": avg,
        "cvar": cvar,
        "mc_slots": mc_slots,
        "seed": seed,
    }
