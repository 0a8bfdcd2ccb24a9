"""
曝光/点击/转化事件的核心数据模型.
"""

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from simple_esdf.events.slots import SlotConfig
from simple_esdf.utils.errors import InputError, InvariantError

# (field_id, feature_index, value)
FeatureEntry = Tuple[int, int, float]


@dataclass(frozen=True)
class FeatureVector:
    """
    稀疏特征：每个 one-hot 字段最多一条.
    """

    entries: Tuple[FeatureEntry, ...]

    def validate(self, feature_dim: int, n_fields: int) -> None:
        seen = set()
        for field_id, index, _ in self.entries:
            if not 0 <= field_id < n_fields:
                raise InputError(f"字段编号越界: {field_id} (n_fields={n_fields})")
            if not 0 <= index < feature_dim:
                raise InputError(f"特征下标越界: {index} (feature_dim={feature_dim})")
            if field_id in seen:
                raise InputError(f"字段 {field_id} 出现多次")
            seen.add(field_id)

    def dense_slots(self, n_fields: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        按字段展开为 (index, value) 两个定长数组，缺失字段 value 为 0.
        """
        idx = np.zeros(n_fields, dtype=np.int64)
        val = np.zeros(n_fields, dtype=np.float64)
        for field_id, index, value in self.entries:
            idx[field_id] = index
            val[field_id] = value
        return idx, val

    def encode(self) -> str:
        return " ".join(f"{f}:{i}:{v!r}" for f, i, v in self.entries)

    @classmethod
    def decode(cls, text: str) -> "FeatureVector":
        entries = []
        for token in text.split():
            try:
                f, i, v = token.split(":")
                entries.append((int(f), int(i), float(v)))
            except ValueError as e:
                raise InputError(f"无法解析特征三元组: {token!r}") from e
        return cls(tuple(entries))


@dataclass(frozen=True)
class EventRecord:
    request_id: str
    sample_id: str
    features: FeatureVector
    y: int
    impression_ts: int
    click_ts: Optional[int] = None
    conversion_ts: Optional[int] = None

    def __post_init__(self):
        if self.y not in (0, 1):
            raise InputError(f"点击标签必须为 0/1: {self.y}")
        if self.y == 1 and self.click_ts is None:
            raise InputError(f"{self.sample_id}: 点击样本缺少 click_ts")
        if self.y == 0 and self.click_ts is not None:
            raise InputError(f"{self.sample_id}: 未点击样本不应有 click_ts")
        if self.conversion_ts is not None:
            if self.y != 1:
                raise InputError(f"{self.sample_id}: 未点击样本不应有转化")
            if self.conversion_ts < self.click_ts:
                raise InputError(f"{self.sample_id}: 转化早于点击")

    @property
    def converted(self) -> bool:
        return self.conversion_ts is not None


@dataclass
class ObservedSample:
    """
    训练时刻对 EventRecord 的观测视图；w 由 E 步写入，其余字段不可变.
    """

    record: EventRecord
    z: int
    e: Optional[int] = None
    d: Optional[int] = None
    w: float = 0.0

    @property
    def y(self) -> int:
        return self.record.y

    @property
    def t(self) -> Optional[int]:
        return self.d if self.z == 1 else self.e

    def validate(self, cfg: SlotConfig) -> None:
        if self.z == 1:
            if self.y != 1:
                raise InvariantError(f"{self.record.sample_id}: z=1 但 y=0")
            if self.d is None or not 0 <= self.d <= cfg.overflow_slot:
                raise InvariantError(f"{self.record.sample_id}: 延迟槽非法 d={self.d}")
            if self.e is not None and self.d > self.e:
                raise InvariantError(f"{self.record.sample_id}: d={self.d} > e={self.e}")
        elif self.y == 1 and self.e is not None and self.e < 0:
            raise InvariantError(f"{self.record.sample_id}: e 为负")


@dataclass(frozen=True)
class IndexPartition:
    I11: List[int]
    I01: List[int]
    I00: List[int]

    @classmethod
    def from_flags(cls, y: Sequence[int], z: Sequence[int]) -> "IndexPartition":
        y = np.asarray(y, dtype=np.int64)
        z = np.asarray(z, dtype=np.int64)
        bad = np.flatnonzero((z == 1) & (y == 0))
        if bad.size:
            raise InvariantError(f"样本 z=1 且 y=0: 下标 {bad[:10].tolist()}")
        return cls(
            I11=np.flatnonzero((z == 1) & (y == 1)).tolist(),
            I01=np.flatnonzero((z == 0) & (y == 1)).tolist(),
            I00=np.flatnonzero((z == 0) & (y == 0)).tolist(),
        )

    def __len__(self) -> int:
        return len(self.I11) + len(self.I01) + len(self.I00)


def partition(batch: Iterable[ObservedSample]) -> IndexPartition:
    """
    把一批样本划分为已转化 I11、未观测转化 I01、未点击 I00，保持输入顺序.
    """
    batch = list(batch)
    return IndexPartition.from_flags([s.y for s in batch], [s.z for s in batch])
