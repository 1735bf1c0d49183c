"""Version-age-of-information scheduling: simulator, agents, oracles, harness."""

__version__ = "0.1.0"

from .env import EnvConfig, EnvState, StatusUpdateEnv, StepOutcome, compute_reward
from .lagrange import LagrangeState, lagrange_update, running_cost_update
from .metrics import EvalTrace, average_cost, average_vaoi, empirical_cvar

__all__ = [
    "EnvConfig",
    "EnvState",
    "StatusUpdateEnv",
    "StepOutcome",
    "compute_reward",
    "LagrangeState",
    "lagrange_update",
    "running_cost_update",
    "EvalTrace",
    "average_cost",
    "average_vaoi",
    "empirical_cvar",
    "__version__",
]
