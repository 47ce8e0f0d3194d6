"""Trainable infilling model: undirected and feature-directed modes."""

from .config import ModelConfig, OptimizerConfig, ShapeError
from .network import InfillNet
from .sampling import (
    ModelSampler,
    MultipleHoles,
    NoHole,
    fill_hole,
    find_hole,
    iterative_fill,
    sample_workload,
    seed_input_ids,
)
from .state import ModelState, init_state, load_checkpoint, save_checkpoint
from .training import (
    NonFiniteLoss,
    collate,
    loss_for_batch,
    moving_average_decreasing_fraction,
    train_model,
    train_step,
)

__all__ = [
    "ModelConfig", "OptimizerConfig", "ShapeError", "InfillNet",
    "ModelState", "init_state", "save_checkpoint", "load_checkpoint",
    "train_step", "train_model", "loss_for_batch", "collate",
    "NonFiniteLoss", "moving_average_decreasing_fraction",
    "fill_hole", "sample_workload", "iterative_fill", "find_hole",
    "ModelSampler", "NoHole", "MultipleHoles", "seed_input_ids",
]
