"""Delay-aware soft actor-critic toolkit for chemical phosphorus dosing.

A desk-scale control stack: a first-order surrogate of a dosing plant,
an exact cost/reward model, wrappers that impose action and observation
delays, a from-scratch SAC implementation on a minimal reverse-mode
autodiff core, PID baselines, and an evaluation/CLI harness that runs
controllers on identical seeded input streams.
"""

from .config import EvalConfig, RunConfig, load_config, parse_config
from .delay import ActionBuffer, DelayConfig, DelayWrapper
from .env import DosingEnv, EnvConfig, EpisodeScheduler, StepResult
from .evaluate import (ComparisonResult, EvalMetrics, EvalReport,
                       ReplayPolicy, SACPolicy, compare_controllers,
                       evaluate_policy)
from .nn import NetworkParams, OptimizerState, forward, backward
from .pid import ActionLog, PIDConfig, PIDPolicy, PIDState, pid_step
from .plant import (ExogenousConfig, ExogenousGenerator, MassBalancePlant,
                    PlantConfig, PlantState)
from .pool import EnvPool, PoolConfig
from .reward import CostBreakdown, RewardConfig, compute_reward
from .sac import ReplayBuffer, SACAgent, SACConfig, train

__version__ = "0.1.0"

__all__ = [
    "ActionBuffer", "ActionLog", "ComparisonResult", "CostBreakdown",
    "DelayConfig", "DelayWrapper", "DosingEnv", "EnvConfig", "EnvPool",
    "EpisodeScheduler", "EvalConfig", "EvalMetrics", "EvalReport",
    "ExogenousConfig", "ExogenousGenerator", "MassBalancePlant",
    "NetworkParams", "OptimizerState", "PIDConfig", "PIDPolicy", "PIDState",
    "PlantConfig", "PlantState", "PoolConfig", "ReplayBuffer", "ReplayPolicy",
    "RewardConfig", "RunConfig", "SACAgent", "SACConfig", "SACPolicy",
    "StepResult", "backward", "compare_controllers", "compute_reward",
    "evaluate_policy", "forward", "load_config", "parse_config", "pid_step",
    "train",
]
