"""Policy-gradient training over the factored, masked action space."""
from .algorithms import (Batch, Trajectory, TrainerConfig, UpdateStats, clipped_surrogate,
                         group_advantage, grpo_update, ppo_update, surrogate_loss, value_loss)
from .policy import MLP, Adam, Policy, batch_log_probs, sample_action
from .trainer import LOG_COLUMNS, Trainer, evaluate, read_checkpoint, rollout

__all__ = [
    "Adam", "Batch", "LOG_COLUMNS", "MLP", "Policy", "Trainer", "TrainerConfig", "Trajectory",
    "UpdateStats", "batch_log_probs", "clipped_surrogate", "evaluate", "group_advantage",
    "grpo_update", "ppo_update", "read_checkpoint", "rollout", "sample_action", "surrogate_loss", "value_loss",
]
