from .history import EpochEntry, TrainHistory, read_history, write_history
from .loop import TrainConfig, Trainer, build_objective, check_policy, train, train_daily
from .optimizer import AdamState, adam_step

__all__ = [
    "AdamState",
    "EpochEntry",
    "TrainConfig",
    "TrainHistory",
    "Trainer",
    "adam_step",
    "build_objective",
    "check_policy",
    "read_history",
    "train",
    "train_daily",
    "write_history",
]
