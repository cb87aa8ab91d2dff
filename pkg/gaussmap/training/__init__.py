from gaussmap.training.adaptive_control import ControlEvent, densify, prune
from gaussmap.training.optimizer import AdamState, adam_step, latest_checkpoint, load_checkpoint, save_checkpoint
from gaussmap.training.train_loop import (
    TrainLog,
    TrainResult,
    evaluate,
    learning_rates,
    optimize,
    run_ablation,
    scene_extent,
    summarize_evaluation,
    train,
)

__all__ = [
    "AdamState",
    "ControlEvent",
    "TrainLog",
    "TrainResult",
    "adam_step",
    "densify",
    "evaluate",
    "latest_checkpoint",
    "learning_rates",
    "load_checkpoint",
    "optimize",
    "prune",
    "run_ablation",
    "save_checkpoint",
    "scene_extent",
    "summarize_evaluation",
    "train",
]
