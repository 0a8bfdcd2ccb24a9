"""归因回放：以某个观测时刻重放事件日志，按各对比方法的策略构造训练标签.

观测规则：conversion_ts <= observe_ts 即视为已观测（闭区间），
observe_ts 之后的转化即使已写在日志里也一律不可见。
"""

from dataclasses import dataclass
from typing import Iterator, List, Sequence, Tuple

import numpy as np

from simple_esdf.constants.constants import FirstDay, LabelPolicy
from simple_esdf.events.models import EventRecord, ObservedSample
from simple_esdf.events.slots import SlotConfig, day_slot, elapsed_slots
from simple_esdf.utils.errors import ConfigError, UndefinedMetricError
from simple_esdf.utils.logging_config import get_logger

logger = get_logger(__name__)


@dataclass
class Snapshot:
    """
    某一策略、某一观测时刻下的样本序列.
    """

    samples: List[ObservedSample]
    policy: LabelPolicy
    observe_ts: int | None
    warning: str | None = None
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[ObservedSample]:
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]


def _first_day_converted(r: EventRecord, cfg: SlotConfig, first_day: str) -> bool:
    if first_day == FirstDay.ROLLING:
        return r.conversion_ts - r.click_ts < cfg.seconds_per_slot
    if first_day == FirstDay.CALENDAR:
        return r.conversion_ts // cfg.seconds_per_slot == r.click_ts // cfg.seconds_per_slot
    raise ConfigError(f"未知的 first_day 模式: {first_day}")


def _label_ground_truth(r: EventRecord, cfg: SlotConfig, window_days: int) -> ObservedSample:
    if r.y == 0:
        return ObservedSample(record=r, z=0)
    window = window_days * cfg.seconds_per_slot
    if r.converted and r.conversion_ts <= r.click_ts + window:
        d = day_slot(r.conversion_ts - r.click_ts, cfg)
        return ObservedSample(record=r, z=1, e=cfg.overflow_slot, d=d)
    return ObservedSample(record=r, z=0, e=cfg.overflow_slot)


def _label_observed(
    r: EventRecord, observe_ts: int, policy: LabelPolicy, cfg: SlotConfig, first_day: str
) -> ObservedSample | None:
    if r.y == 0:
        return ObservedSample(record=r, z=0)

    e = elapsed_slots(r.click_ts, observe_ts, cfg)
    observed = r.converted and r.conversion_ts <= observe_ts
    d = day_slot(r.conversion_ts - r.click_ts, cfg) if observed else None

    if policy == LabelPolicy.FULL_CENSORED:
        return ObservedSample(record=r, z=int(observed), e=e, d=d)
    if policy == LabelPolicy.SHIFT:
        # 标签随观测日逐日修正，但丢弃流逝时间
        return ObservedSample(record=r, z=int(observed), d=d)
    if policy in (LabelPolicy.ESMM_DAY1, LabelPolicy.NAIVE_DROP):
        day1 = observed and _first_day_converted(r, cfg, first_day)
        if policy == LabelPolicy.NAIVE_DROP and observed and not day1:
            # 已知假负：首日标签为负，但 observe_ts 前已观测到转化
            return None
        return ObservedSample(record=r, z=int(day1), d=0 if day1 else None)
    raise ConfigError(f"不支持的标签策略: {policy}")


def snapshot(
    log: Sequence[EventRecord],
    observe_ts: int | None,
    policy: LabelPolicy,
    cfg: SlotConfig,
    window_days: int = 7,
    first_day: str = FirstDay.ROLLING,
) -> Snapshot:
    """按策略构造快照.

    GROUND_TRUTH 与 observe_ts 无关：只看转化是否落在点击后 window_days 的归因窗内，
    且所有点击样本视为完全成熟 (e = T+1)。其余策略仅保留 observe_ts 之前的曝光。
    """
    policy = LabelPolicy(policy)
    if policy == LabelPolicy.GROUND_TRUTH:
        samples = [_label_ground_truth(r, cfg, window_days) for r in log]
        return Snapshot(samples, policy, observe_ts)

    if observe_ts is None:
        raise ConfigError(f"{policy.value} 策略需要 observe_ts")
    if log and observe_ts < min(r.impression_ts for r in log):
        message = f"observe_ts={observe_ts} 早于日志起点，快照为空"
        logger.warning("[Attribution] %s", message)
        return Snapshot([], policy, observe_ts, warning=message)

    samples: List[ObservedSample] = []
    dropped = 0
    for r in log:
        if r.impression_ts > observe_ts:
            continue
        sample = _label_observed(r, observe_ts, policy, cfg, first_day)
        if sample is None:
            dropped += 1
            continue
        samples.append(sample)
    logger.info(
        "[Attribution] %s 快照: %d 个样本，丢弃 %d，观测时刻 %d",
        policy.value,
        len(samples),
        dropped,
        observe_ts,
    )
    return Snapshot(samples, policy, observe_ts, dropped=dropped)


def delay_histogram(samples: Sequence[ObservedSample] | Snapshot, cfg: SlotConfig) -> np.ndarray:
    """
    已转化样本在 0..T+1 槽上的归一化延迟分布.
    """
    d = np.array([s.d for s in samples if s.z == 1], dtype=np.int64)
    if d.size == 0:
        raise UndefinedMetricError("没有转化样本，延迟直方图无定义")
    return np.bincount(d, minlength=cfg.num_bins).astype(np.float64) / d.size


def train_observe_ts(start_ts: int, train_days: int, cfg: SlotConfig) -> int:
    """
    训练期最后一秒：训练标签只能归因到这里.
    """
    return start_ts + train_days * cfg.seconds_per_slot - 1


def split_by_day(
    log: Sequence[EventRecord],
    start_ts: int,
    train_days: int,
    test_days: int,
    cfg: SlotConfig,
) -> Tuple[List[EventRecord], List[EventRecord]]:
    """
    按曝光日切分训练集（前 train_days 天）与测试集（随后 test_days 天）.
    """
    train_end = start_ts + train_days * cfg.seconds_per_slot
    test_end = train_end + test_days * cfg.seconds_per_slot
    train = [r for r in log if start_ts <= r.impression_ts < train_end]
    test = [r for r in log if train_end <= r.impression_ts < test_end]
    logger.info("[Attribution] 切分: 训练 %d 条，测试 %d 条", len(train), len(test))
    return train, test


def daily_snapshots(
    log: Sequence[EventRecord],
    start_ts: int,
    train_days: int,
    policy: LabelPolicy,
    cfg: SlotConfig,
    window_days: int = 7,
    first_day: str = FirstDay.ROLLING,
) -> List[Snapshot]:
    """
    逐日重新成熟的快照序列：第 k 个快照在第 k 天结束时观测截至当天的全部曝光.
    """
    return [
        snapshot(log, train_observe_ts(start_ts, k, cfg), policy, cfg, window_days, first_day)
        for k in range(1, train_days + 1)
    ]
