"""Hypernetwork PPO over the trade-off simplex."""

from .checkpoint import Checkpoint, CheckpointError
from .config import EvalConfig, HypernetConfig, RunConfig, TrainerConfig
from .loop import TrainingAborted, TrainResult, build_specs, evaluate, evaluate_params, init_checkpoint, train
from .ppo import (
    AdamState,
    ObsNormalizer,
    Minibatch,
    RolloutBatch,
    actor_loss,
    adam_apply,
    collect_rollouts,
    critic_loss,
    flatten_batch,
    gae,
    gae_per_objective,
    normalize_and_scalarize,
)

__all__ = [
    "AdamState", "Checkpoint", "CheckpointError", "EvalConfig", "HypernetConfig", "Minibatch", "ObsNormalizer", "RolloutBatch",
    "RunConfig",
    "TrainResult", "TrainerConfig", "TrainingAborted", "actor_loss", "adam_apply", "build_specs",
    "collect_rollouts", "critic_loss", "evaluate", "evaluate_params", "flatten_batch", "gae",
    "gae_per_objective", "init_checkpoint", "normalize_and_scalarize", "train",
]
