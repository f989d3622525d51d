"""Losses, schedule, REINFORCE estimator, checkpoints and the training loop."""
from .losses import ENTROPY_WEIGHT, supervised_loss, unsupervised_loss, entropy_term
from varcontext.compute import lr_at, scaled_decay_interval
from .reinforce import (BASELINE_DECAY, BaselineTracker, baseline_update, sample_referent, reinforce_surrogate,
                        reinforce_generation_step, exact_expected_gradient, estimator_samples)
from .checkpoint import ModelCheckpoint, encode_checkpoint, save_checkpoint, load_checkpoint
from .trainer import Trainer, TrainerState, ExpressionStream, METRIC_COLUMNS, CHECKPOINT_NAME, METRICS_NAME

__all__ = [
    "ENTROPY_WEIGHT", "supervised_loss", "unsupervised_loss", "entropy_term",
    "lr_at", "scaled_decay_interval",
    "BASELINE_DECAY", "BaselineTracker", "baseline_update", "sample_referent", "reinforce_surrogate",
    "reinforce_generation_step", "exact_expected_gradient", "estimator_samples",
    "ModelCheckpoint", "encode_checkpoint", "save_checkpoint", "load_checkpoint",
    "Trainer", "TrainerState", "ExpressionStream", "METRIC_COLUMNS", "CHECKPOINT_NAME", "METRICS_NAME",
]
