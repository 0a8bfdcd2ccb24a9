"""
真值文件读写：与事件日志同键，仅供测试与报告使用.
"""

from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from simple_esdf.constants.system import SystemConstants
from simple_esdf.synthgen.generator import GroundTruth
from simple_esdf.utils.artifact import ArtifactHeader, read_header, write_header
from simple_esdf.utils.errors import DataError
from simple_esdf.utils.logging_config import get_logger

logger = get_logger(__name__)

TRUTH_COLUMNS = ["sample_id", "y", "p_ctr", "p_cvr", "c", "d", "delay_dist"]


def write_truth(path: Path, truths: List[GroundTruth], config: Dict[str, Any]) -> None:
    header = ArtifactHeader(
        magic=SystemConstants.TRUTH_MAGIC, config=config, columns=TRUTH_COLUMNS
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        write_header(fh, header)
        for t in truths:
            dist = ",".join(repr(float(v)) for v in t.delay_dist)
            d = "" if t.d is None else str(t.d)
            fh.write(f"{t.sample_id}\t{t.y}\t{t.p_ctr!r}\t{t.p_cvr!r}\t{t.c}\t{d}\t{dist}\n")
    logger.info("[Truth] 写出 %d 条真值: %s", len(truths), path)


def read_truth(path: Path) -> List[GroundTruth]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"真值文件不存在: {path}")
    truths = []
    with path.open("r", encoding="utf-8") as fh:
        lines = iter(fh)
        read_header(lines, SystemConstants.TRUTH_MAGIC)
        for lineno, raw in enumerate(lines, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            try:
                sid, y, p_ctr, p_cvr, c, d, dist = line.split("\t")
                truths.append(
                    GroundTruth(
                        sample_id=sid,
                        y=int(y),
                        p_ctr=float(p_ctr),
                        p_cvr=float(p_cvr),
                        delay_dist=np.array([float(v) for v in dist.split(",")]),
                        c=int(c),
                        d=int(d) if d else None,
                    )
                )
            except ValueError as e:
                raise DataError(f"真值第 {lineno} 行无法解析: {e}") from e
    return truths
