from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from simple_esdf.constants.constants import PROB_EPS
from simple_esdf.utils.errors import UndefinedMetricError
from simple_esdf.utils.logging_config import get_logger

logger = get_logger(__name__)


def log_loss(scores, labels) -> float:
    """
    平均交叉熵，概率截断到 [ε, 1−ε].
    """
    p = np.clip(np.asarray(scores, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(labels, dtype=np.float64)
    if y.size == 0:
        raise UndefinedMetricError("空样本集的 log loss 无定义")
    return float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean())


@dataclass
class DelayLoss:
    """
    overall 含全部样本；buckets 只含该延迟槽的正样本，空桶列入 omitted.
    """

    overall: float
    buckets: Dict[int, float] = field(default_factory=dict)
    counts: Dict[int, int] = field(default_factory=dict)
    omitted: List[int] = field(default_factory=list)

    def delayed_mean(self) -> float:
        values = [v for k, v in self.buckets.items() if k >= 1]
        if not values:
            raise UndefinedMetricError("没有延迟槽 ≥ 1 的转化样本")
        return float(np.mean(values))


def log_loss_by_delay(scores, labels, delay_slots, num_bins: int) -> DelayLoss:
    """按转化延迟槽分桶的 log loss.

    负样本只计入 overall；delay_slots 对负样本取值任意（通常为 -1）。
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    slots = np.asarray(delay_slots, dtype=np.int64)
    result = DelayLoss(overall=log_loss(scores, labels))
    for k in range(num_bins):
        rows = (labels == 1) & (slots == k)
        if not rows.any():
            result.omitted.append(k)
            continue
        result.buckets[k] = log_loss(scores[rows], labels[rows])
        result.counts[k] = int(rows.sum())
    if result.omitted:
        logger.warning("[Metrics] 延迟槽 %s 没有转化样本，已从分桶 log loss 中省略", result.omitted)
    return result
