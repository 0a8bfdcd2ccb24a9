"""跨目标、跨种子的对比汇总与绘图数据文件."""

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np
from rich.table import Table

from simple_esdf.constants.constants import Objective
from simple_esdf.constants.system import SystemConstants
from simple_esdf.metrics.ranking import rela_impr
from simple_esdf.metrics.report import EvalReport
from simple_esdf.utils.artifact import ArtifactHeader, write_header
from simple_esdf.utils.errors import DataError, UndefinedMetricError
from simple_esdf.utils.logging_config import get_logger

logger = get_logger(__name__)

COMPARISON_COLUMNS = [
    "objective", "n", "auc_mean", "auc_std", "gauc_mean", "gauc_std",
    "log_loss_mean", "rela_impr", "gauc_sparse",
]


@dataclass
class ComparisonRow:
    objective: str
    n: int
    auc_mean: float
    auc_std: float
    gauc_mean: float | None
    gauc_std: float | None
    log_loss_mean: float
    rela_impr: float | None
    gauc_sparse: bool


def _mean_std(values: Sequence[float]):
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def check_slot_consistency(reports: Sequence[EvalReport]) -> Dict[str, int]:
    slots = {tuple(sorted(r.slot.items())) for r in reports}
    if len(slots) != 1:
        raise DataError(f"输入报告的时间槽配置不一致: {sorted(slots)}")
    return dict(slots.pop())


def aggregate_reports(reports: Sequence[EvalReport], base: str = Objective.ESMM.value) -> List[ComparisonRow]:
    """
    按目标聚合多次重复的报告，RelaImpr 以 base 目标的平均 AUC 为基线.
    """
    if not reports:
        raise DataError("没有可汇总的评估报告")
    check_slot_consistency(reports)
    grouped: Dict[str, List[EvalReport]] = defaultdict(list)
    for r in reports:
        grouped[r.objective].append(r)

    base_auc = None
    if base in grouped:
        base_auc = float(np.mean([r.auc for r in grouped[base]]))

    rows = []
    for objective, group in grouped.items():
        auc_mean, auc_std = _mean_std([r.auc for r in group])
        gaucs = [r.gauc for r in group if r.gauc is not None]
        gauc_mean, gauc_std = _mean_std(gaucs) if gaucs else (None, None)
        impr = None
        if base_auc is not None:
            try:
                impr = rela_impr(auc_mean, base_auc)
            except UndefinedMetricError:
                logger.warning("[Report] 基线 %s AUC=%.4f 不高于 0.5，RelaImpr 省略", base, base_auc)
        rows.append(
            ComparisonRow(
                objective=objective,
                n=len(group),
                auc_mean=auc_mean,
                auc_std=auc_std,
                gauc_mean=gauc_mean,
                gauc_std=gauc_std,
                log_loss_mean=float(np.mean([r.delay_loss.overall for r in group])),
                rela_impr=impr,
                gauc_sparse=any(r.gauc_sparse for r in group),
            )
        )
    return rows


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(value)


def _write_table(path: Path, columns: List[str], rows: List[List[str]], config: Dict[str, Any], kind: str) -> None:
    header = ArtifactHeader(
        magic=SystemConstants.TABLE_MAGIC, config=config, extras={"table": kind}, columns=columns
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        write_header(fh, header)
        for row in rows:
            fh.write("\t".join(row) + "\n")
    logger.info("[Report] 写出 %s: %s", kind, path)


def write_comparison(path: Path, rows: Sequence[ComparisonRow], config: Dict[str, Any]) -> None:
    body = [
        [
            r.objective,
            str(r.n),
            repr(r.auc_mean),
            repr(r.auc_std),
            _fmt(r.gauc_mean),
            _fmt(r.gauc_std),
            repr(r.log_loss_mean),
            _fmt(r.rela_impr),
            str(int(r.gauc_sparse)),
        ]
        for r in rows
    ]
    _write_table(path, COMPARISON_COLUMNS, body, config, "comparison")


def write_delay_histogram(path: Path, reports: Sequence[EvalReport], config: Dict[str, Any]) -> None:
    """
    真值延迟分布，每个槽一行（共 T+2 行）.
    """
    hist = np.mean([r.delay_histogram for r in reports], axis=0)
    body = [[str(k), repr(float(v))] for k, v in enumerate(hist)]
    _write_table(path, ["slot", "fraction"], body, config, "delay_histogram")


def write_loss_by_day(path: Path, reports: Sequence[EvalReport], config: Dict[str, Any]) -> None:
    """
    各目标在各延迟槽上的平均 log loss（只含正样本）.
    """
    grouped: Dict[str, Dict[int, List[float]]] = defaultdict(lambda: defaultdict(list))
    for r in reports:
        for k, value in r.delay_loss.buckets.items():
            grouped[r.objective][k].append(value)
    body = [
        [objective, str(k), repr(float(np.mean(values)))]
        for objective, buckets in grouped.items()
        for k, values in sorted(buckets.items())
    ]
    _write_table(path, ["objective", "slot", "log_loss"], body, config, "loss_by_day")


def render_comparison(rows: Sequence[ComparisonRow]) -> Table:
    table = Table(title="目标对比")
    for name in ("目标", "次数", "AUC", "GAUC", "LogLoss", "RelaImpr"):
        table.add_column(name, justify="right" if name != "目标" else "left")
    for r in rows:
        gauc_text = "n/a" if r.gauc_mean is None else f"{r.gauc_mean:.4f} ± {r.gauc_std:.4f}"
        if r.gauc_sparse:
            gauc_text += " *"
        table.add_row(
            r.objective,
            str(r.n),
            f"{r.auc_mean:.4f} ± {r.auc_std:.4f}",
            gauc_text,
            f"{r.log_loss_mean:.4f}",
            "-" if r.rela_impr is None else f"{r.rela_impr:+.2f}%",
        )
    return table
