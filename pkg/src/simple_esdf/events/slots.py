"""
日槽离散化：把点击后的延迟/流逝时间映射到 T+2 个槽.

槽 i 覆盖点击后 [i·s, (i+1)·s) 秒（s = seconds_per_slot），i <= T；
更晚的全部落入溢出槽 T+1。
"""

from dataclasses import dataclass

import numpy as np

from simple_esdf.utils.errors import ConfigError, InputError


@dataclass(frozen=True)
class SlotConfig:
    max_delay_days: int = 6
    seconds_per_slot: int = 86400

    def __post_init__(self):
        if int(self.max_delay_days) < 1:
            raise ConfigError(f"max_delay_days 必须 >= 1: {self.max_delay_days}")
        if int(self.seconds_per_slot) <= 0:
            raise ConfigError(f"seconds_per_slot 必须 > 0: {self.seconds_per_slot}")

    @property
    def T(self) -> int:
        return self.max_delay_days

    @property
    def num_bins(self) -> int:
        return self.max_delay_days + 2

    @property
    def overflow_slot(self) -> int:
        return self.max_delay_days + 1

    def to_dict(self) -> dict:
        return {
            "max_delay_days": self.max_delay_days,
            "seconds_per_slot": self.seconds_per_slot,
        }


def day_slot(delay_seconds: int, cfg: SlotConfig) -> int:
    """
    转化延迟所在的日槽，超过 T 天的归入 T+1.
    """
    if delay_seconds < 0:
        raise InputError(f"延迟不能为负: {delay_seconds}")
    return min(int(delay_seconds) // cfg.seconds_per_slot, cfg.overflow_slot)


def elapsed_slots(click_ts: int, observe_ts: int, cfg: SlotConfig) -> int:
    """
    观测时刻距点击已流逝的槽数，封顶 T+1（此时生存尾部为空和）.
    """
    if observe_ts < click_ts:
        raise InputError(f"观测时间早于点击时间: observe_ts={observe_ts} < click_ts={click_ts}")
    return min((int(observe_ts) - int(click_ts)) // cfg.seconds_per_slot, cfg.overflow_slot)


def day_slots(delay_seconds: np.ndarray, cfg: SlotConfig) -> np.ndarray:
    """
    day_slot 的向量化版本.
    """
    delay_seconds = np.asarray(delay_seconds, dtype=np.int64)
    if np.any(delay_seconds < 0):
        raise InputError("延迟数组中存在负值")
    return np.minimum(delay_seconds // cfg.seconds_per_slot, cfg.overflow_slot)
