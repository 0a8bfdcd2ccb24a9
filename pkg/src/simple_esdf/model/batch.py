"""
把 ObservedSample 序列整理成定长数组，供前向/反向与目标函数使用.
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from simple_esdf.events.models import ObservedSample
from simple_esdf.events.slots import SlotConfig


@dataclass
class Batch:
    idx: np.ndarray  # (B, F) 全局特征下标
    val: np.ndarray  # (B, F) 特征值，缺失字段为 0
    y: np.ndarray
    z: np.ndarray
    e: np.ndarray  # 延迟塔输入的流逝槽；未定义时取 T+1
    d: np.ndarray  # 延迟槽；未定义时取 -1
    u_d: np.ndarray  # 连续延迟（以槽长为单位），DFM 使用
    u_e: np.ndarray  # 连续流逝时间（以槽长为单位），DFM 使用
    sample_ids: List[str]
    request_ids: List[str]

    def __len__(self) -> int:
        return self.idx.shape[0]

    @property
    def t(self) -> np.ndarray:
        return np.where(self.z == 1, self.d, self.e)

    def take(self, rows: np.ndarray) -> "Batch":
        rows = np.asarray(rows, dtype=np.int64)
        return Batch(
            idx=self.idx[rows],
            val=self.val[rows],
            y=self.y[rows],
            z=self.z[rows],
            e=self.e[rows],
            d=self.d[rows],
            u_d=self.u_d[rows],
            u_e=self.u_e[rows],
            sample_ids=[self.sample_ids[i] for i in rows],
            request_ids=[self.request_ids[i] for i in rows],
        )

    @classmethod
    def from_samples(
        cls,
        samples: Sequence[ObservedSample],
        cfg: SlotConfig,
        n_fields: int,
        observe_ts: int | None = None,
    ) -> "Batch":
        n = len(samples)
        idx = np.zeros((n, n_fields), dtype=np.int64)
        val = np.zeros((n, n_fields), dtype=np.float64)
        y = np.zeros(n, dtype=np.int64)
        z = np.zeros(n, dtype=np.int64)
        e = np.full(n, cfg.overflow_slot, dtype=np.int64)
        d = np.full(n, -1, dtype=np.int64)
        u_d = np.zeros(n, dtype=np.float64)
        u_e = np.full(n, float(cfg.overflow_slot), dtype=np.float64)
        sps = float(cfg.seconds_per_slot)
        for i, s in enumerate(samples):
            r = s.record
            idx[i], val[i] = r.features.dense_slots(n_fields)
            y[i] = r.y
            z[i] = s.z
            if s.e is not None:
                e[i] = s.e
            if s.d is not None:
                d[i] = s.d
            if s.z == 1:
                u_d[i] = (r.conversion_ts - r.click_ts) / sps
            if r.y == 1 and observe_ts is not None:
                u_e[i] = max(observe_ts - r.click_ts, 0) / sps
        return cls(
            idx=idx,
            val=val,
            y=y,
            z=z,
            e=e,
            d=d,
            u_d=u_d,
            u_e=u_e,
            sample_ids=[s.record.sample_id for s in samples],
            request_ids=[s.record.request_id for s in samples],
        )

    @classmethod
    def from_labels(cls, y, z, e=None, d=None, u_d=None, u_e=None) -> "Batch":
        """
        只含标签、不含特征的批次，供目标函数单独使用.
        """
        y = np.asarray(y, dtype=np.int64)
        n = y.shape[0]

        def _arr(values, fill, dtype):
            if values is None:
                return np.full(n, fill, dtype=dtype)
            return np.asarray(values, dtype=dtype)

        return cls(
            idx=np.zeros((n, 1), dtype=np.int64),
            val=np.zeros((n, 1), dtype=np.float64),
            y=y,
            z=_arr(z, 0, np.int64),
            e=_arr(e, 0, np.int64),
            d=_arr(d, -1, np.int64),
            u_d=_arr(u_d, 0.0, np.float64),
            u_e=_arr(u_e, 0.0, np.float64),
            sample_ids=[str(i) for i in range(n)],
            request_ids=["" for _ in range(n)],
        )
