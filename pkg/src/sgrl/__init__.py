"""Population-coded spiking actor network trained with TD3 under pluggable
surrogate gradients, with built-in environments and a seeded experiment CLI."""

from .config import ConfigError, ExperimentConfig
from .envs import Pendulum, Reach1D, make_env, wrap_angle
from .experiment import (aggregate_runs, evaluate_policy, gradcheck_report,
                         plot_curves, random_baseline, run_experiment, run_single)
from .spiking_actor import (ActorConfig, ActorParams, actor_backward,
                            actor_forward, init_actor_params)
from .surrogate import SurrogateSpec, canonical_kind, smoothed_step, surrogate_grad
from .td3 import (ReplayBuffer, Td3Config, Td3State, Transition, select_action,
                  soft_update, td3_init, train_step)
from .tensor_core import AdamState, ContractViolation, Rng, adam_step

__all__ = [
    "ActorConfig", "ActorParams", "AdamState", "ConfigError", "ContractViolation",
    "ExperimentConfig", "Pendulum", "Reach1D", "ReplayBuffer", "Rng",
    "SurrogateSpec", "Td3Config", "Td3State", "Transition", "actor_backward",
    "actor_forward", "adam_step", "aggregate_runs", "canonical_kind",
    "evaluate_policy", "gradcheck_report", "init_actor_params", "make_env",
    "plot_curves", "random_baseline", "run_experiment", "run_single",
    "select_action", "smoothed_step", "soft_update", "surrogate_grad",
    "td3_init", "train_step", "wrap_angle",
]

__version__ = "0.1.0"
