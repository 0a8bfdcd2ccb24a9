from .replay import (
    Snapshot,
    daily_snapshots,
    delay_histogram,
    snapshot,
    split_by_day,
    train_observe_ts,
)

__all__ = [
    "Snapshot",
    "daily_snapshots",
    "delay_histogram",
    "snapshot",
    "split_by_day",
    "train_observe_ts",
]
