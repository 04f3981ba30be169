"""Block graphon mean-field control toolkit."""

from .env import EnvironmentSpec, malware_env, sis_env, validate
from .graphon import (
    BlockKernel, ErdosRenyi, RandomGeometric, Step, StochasticBlock, discretize, evaluate,
    operator_norm_distance, sample_edges,
)
from .mfc import aggregated_reward, aggregated_transition, bellman_apply, rollout
from .nagent import convergence_study, deploy_policy, monte_carlo, run_episode
from .optimizer import OptimizerConfig, evaluate_policy, optimize

__version__ = "0.1.0"

__all__ = [
    "EnvironmentSpec", "malware_env", "sis_env", "validate",
    "BlockKernel", "ErdosRenyi", "RandomGeometric", "Step", "StochasticBlock", "discretize",
    "evaluate", "operator_norm_distance", "sample_edges",
    "aggregated_reward", "aggregated_transition", "bellman_apply", "rollout",
    "convergence_study", "deploy_policy", "monte_carlo", "run_episode",
    "OptimizerConfig", "evaluate_policy", "optimize",
]
