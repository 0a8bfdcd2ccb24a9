"""
事件日志与快照的文本读写（制表符分隔，首行魔数）.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from simple_esdf.constants.constants import LabelPolicy
from simple_esdf.constants.system import SystemConstants
from simple_esdf.events.models import EventRecord, FeatureVector, ObservedSample
from simple_esdf.events.slots import SlotConfig
from simple_esdf.utils.artifact import ArtifactHeader, read_header, write_header
from simple_esdf.utils.errors import DataError, EsdfError
from simple_esdf.utils.logging_config import get_logger

logger = get_logger(__name__)

EVENT_COLUMNS = [
    "request_id",
    "sample_id",
    "y",
    "impression_ts",
    "click_ts",
    "conversion_ts",
    "features",
]
SNAPSHOT_COLUMNS = EVENT_COLUMNS + ["z", "e", "d"]


@dataclass
class EventLog:
    records: List[EventRecord]
    feature_dim: int
    n_fields: int
    config: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)


def _opt_int(text: str) -> Optional[int]:
    return int(text) if text != "" else None


def _fmt_opt(value: Optional[int]) -> str:
    return "" if value is None else str(value)


def _record_fields(r: EventRecord) -> List[str]:
    return [
        r.request_id,
        r.sample_id,
        str(r.y),
        str(r.impression_ts),
        _fmt_opt(r.click_ts),
        _fmt_opt(r.conversion_ts),
        r.features.encode(),
    ]


def _parse_record(cols: List[str], lineno: int) -> EventRecord:
    try:
        return EventRecord(
            request_id=cols[0],
            sample_id=cols[1],
            y=int(cols[2]),
            impression_ts=int(cols[3]),
            click_ts=_opt_int(cols[4]),
            conversion_ts=_opt_int(cols[5]),
            features=FeatureVector.decode(cols[6]),
        )
    except (IndexError, ValueError, EsdfError) as e:
        raise DataError(f"第 {lineno} 行无法解析: {e}") from e


def write_event_log(path: Path, log: EventLog) -> None:
    header = ArtifactHeader(
        magic=SystemConstants.EVENT_LOG_MAGIC,
        config=log.config,
        extras={"feature_dim": str(log.feature_dim), "n_fields": str(log.n_fields)},
        columns=EVENT_COLUMNS,
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        write_header(fh, header)
        for r in log.records:
            fh.write("\t".join(_record_fields(r)) + "\n")
    logger.info("[EventLog] 写出 %d 条记录: %s", len(log.records), path)


def read_event_log(path: Path) -> EventLog:
    path = Path(path)
    if not path.exists():
        raise DataError(f"事件日志不存在: {path}")
    with path.open("r", encoding="utf-8") as fh:
        lines = iter(fh)
        header, _ = read_header(lines, SystemConstants.EVENT_LOG_MAGIC)
        try:
            feature_dim = int(header.extras["feature_dim"])
            n_fields = int(header.extras["n_fields"])
        except (KeyError, ValueError) as e:
            raise DataError(f"事件日志头缺少维度声明: {e}") from e
        records = []
        for lineno, raw in enumerate(lines, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            record = _parse_record(line.split("\t"), lineno)
            try:
                record.features.validate(feature_dim, n_fields)
            except EsdfError as e:
                raise DataError(f"第 {lineno} 行: {e}") from e
            records.append(record)
    logger.info("[EventLog] 读入 %d 条记录: %s", len(records), path)
    return EventLog(records, feature_dim, n_fields, header.config)


def write_snapshot(
    path: Path,
    samples: List[ObservedSample],
    policy: LabelPolicy,
    observe_ts: int,
    cfg: SlotConfig,
    feature_dim: int,
    n_fields: int,
    config: Dict[str, Any],
) -> None:
    header = ArtifactHeader(
        magic=SystemConstants.SNAPSHOT_MAGIC,
        config=config,
        extras={
            "feature_dim": str(feature_dim),
            "n_fields": str(n_fields),
            "policy": policy.value,
            "observe_ts": str(observe_ts),
            "max_delay_days": str(cfg.max_delay_days),
            "seconds_per_slot": str(cfg.seconds_per_slot),
        },
        columns=SNAPSHOT_COLUMNS,
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        write_header(fh, header)
        for s in samples:
            cols = _record_fields(s.record) + [str(s.z), _fmt_opt(s.e), _fmt_opt(s.d)]
            fh.write("\t".join(cols) + "\n")
    logger.info("[Snapshot] 写出 %d 个样本 (%s): %s", len(samples), policy.value, path)
