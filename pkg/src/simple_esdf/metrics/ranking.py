from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from simple_esdf.utils.errors import UndefinedMetricError
from simple_esdf.utils.logging_config import get_logger

logger = get_logger(__name__)


def auc(scores, labels) -> float:
    """
    秩和法 AUC，平分按 0.5 计.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int(labels.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC 需要同时存在正负样本")
    ranks = rankdata(scores, method="average")
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_pairwise(scores, labels) -> float:
    """
    逐对枚举的 AUC，O(n²)，仅用于小规模校验.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetricError("AUC 需要同时存在正负样本")
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)


@dataclass
class GaucResult:
    value: float
    used_groups: int
    skipped_groups: int

    @property
    def total_groups(self) -> int:
        return self.used_groups + self.skipped_groups


def gauc_with_counts(scores, labels, group_ids: Sequence[str], group_weights=None) -> GaucResult:
    """按分组加权的 AUC.

    默认权重为组内曝光数；只含单一类别的组不计入分子和分母。
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    _, inverse = np.unique(np.asarray(group_ids), return_inverse=True)
    order = np.argsort(inverse, kind="stable")
    bounds = np.flatnonzero(np.diff(inverse[order])) + 1

    num = den = 0.0
    used = skipped = 0
    for rows in np.split(order, bounds):
        if rows.size == 0:
            continue
        n_pos = labels[rows].sum()
        if n_pos == 0 or n_pos == rows.size:
            skipped += 1
            continue
        weight = rows.size if group_weights is None else float(group_weights[rows[0]])
        num += weight * auc(scores[rows], labels[rows])
        den += weight
        used += 1
    if used == 0:
        raise UndefinedMetricError(f"没有同时含正负样本的分组 (共 {skipped} 组)")
    return GaucResult(num / den, used, skipped)


def gauc(scores, labels, group_ids: Sequence[str], group_weights=None) -> float:
    return gauc_with_counts(scores, labels, group_ids, group_weights).value


def rela_impr(measured_auc: float, base_auc: float) -> float:
    """
    相对提升百分比：((measured − 0.5) / (base − 0.5) − 1) · 100.
    """
    if base_auc <= 0.5:
        raise UndefinedMetricError(f"基线 AUC 必须大于 0.5: {base_auc}")
    return ((measured_auc - 0.5) / (base_auc - 0.5) - 1.0) * 100.0
