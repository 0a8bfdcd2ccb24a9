"""评估报告：在真值标签的测试集上给模型打分，并以“每行一个指标”的文本格式落盘."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from rich.table import Table

from simple_esdf.attribution import delay_histogram, snapshot
from simple_esdf.constants.constants import LabelPolicy, ScoreMode
from simple_esdf.constants.system import SystemConstants
from simple_esdf.events.models import EventRecord
from simple_esdf.events.slots import SlotConfig
from simple_esdf.metrics.calibration import CalibrationReport, calibration
from simple_esdf.metrics.loss import DelayLoss, log_loss_by_delay
from simple_esdf.metrics.ranking import auc, gauc_with_counts
from simple_esdf.model.batch import Batch
from simple_esdf.model.network import Heads, ModelParams, forward_batch
from simple_esdf.synthgen.generator import GroundTruth
from simple_esdf.utils.artifact import ArtifactHeader, read_header, write_header
from simple_esdf.utils.errors import ConfigError, DataError, UndefinedMetricError
from simple_esdf.utils.logging_config import get_logger

logger = get_logger(__name__)

REPORT_COLUMNS = ["metric", "key", "value"]
EVAL_CHUNK = 8192


@dataclass
class EvalReport:
    n_eval: int
    auc: float
    gauc: float | None
    gauc_used: int
    gauc_skipped: int
    gauc_sparse: bool
    delay_loss: DelayLoss
    delay_histogram: np.ndarray
    calibration: CalibrationReport | None = None
    score_mode: str = ScoreMode.CVR
    objective: str = ""
    slot: Dict[str, int] = field(default_factory=dict)

    def to_rows(self) -> List[Tuple[str, str, str]]:
        rows = [
            ("n_eval", "", str(self.n_eval)),
            ("auc", "", repr(self.auc)),
            ("gauc", "", "" if self.gauc is None else repr(self.gauc)),
            ("gauc_groups", "used", str(self.gauc_used)),
            ("gauc_groups", "skipped", str(self.gauc_skipped)),
            ("gauc_sparse", "", str(int(self.gauc_sparse))),
            ("log_loss", "overall", repr(self.delay_loss.overall)),
        ]
        for k, value in sorted(self.delay_loss.buckets.items()):
            rows.append(("log_loss", str(k), repr(value)))
            rows.append(("log_loss_count", str(k), str(self.delay_loss.counts[k])))
        for k in self.delay_loss.omitted:
            rows.append(("log_loss_omitted", str(k), "1"))
        for k, value in enumerate(self.delay_histogram):
            rows.append(("delay_histogram", str(k), repr(float(value))))
        if self.calibration is not None:
            c = self.calibration
            rows += [
                ("calibration", "n", str(c.n)),
                ("calibration", "mean_predicted", repr(c.mean_predicted)),
                ("calibration", "mean_true", repr(c.mean_true)),
                ("calibration", "mean_observed", repr(c.mean_observed)),
            ]
        return rows

    @classmethod
    def from_rows(cls, rows: Sequence[Tuple[str, str, str]], extras: Dict[str, str]) -> "EvalReport":
        values: Dict[Tuple[str, str], str] = {(m, k): v for m, k, v in rows}
        try:
            delay_loss = DelayLoss(overall=float(values[("log_loss", "overall")]))
            hist: Dict[int, float] = {}
            calib: Dict[str, str] = {}
            for (metric, key), value in values.items():
                if metric == "log_loss" and key != "overall":
                    delay_loss.buckets[int(key)] = float(value)
                elif metric == "log_loss_count":
                    delay_loss.counts[int(key)] = int(value)
                elif metric == "log_loss_omitted":
                    delay_loss.omitted.append(int(key))
                elif metric == "delay_histogram":
                    hist[int(key)] = float(value)
                elif metric == "calibration":
                    calib[key] = value
            delay_loss.omitted.sort()
            gauc_text = values[("gauc", "")]
            return cls(
                n_eval=int(values[("n_eval", "")]),
                auc=float(values[("auc", "")]),
                gauc=float(gauc_text) if gauc_text else None,
                gauc_used=int(values[("gauc_groups", "used")]),
                gauc_skipped=int(values[("gauc_groups", "skipped")]),
                gauc_sparse=values[("gauc_sparse", "")] == "1",
                delay_loss=delay_loss,
                delay_histogram=np.array([hist[k] for k in sorted(hist)]),
                calibration=CalibrationReport(
                    n=int(calib["n"]),
                    mean_predicted=float(calib["mean_predicted"]),
                    mean_true=float(calib["mean_true"]),
                    mean_observed=float(calib["mean_observed"]),
                )
                if calib
                else None,
                score_mode=extras.get("score", ScoreMode.CVR),
                objective=extras.get("objective", ""),
                slot={
                    "max_delay_days": int(extras["max_delay_days"]),
                    "seconds_per_slot": int(extras["seconds_per_slot"]),
                },
            )
        except (KeyError, ValueError) as e:
            raise DataError(f"评估报告缺少或含有无效字段: {e}") from e


def predict(params: ModelParams, batch: Batch, chunk: int = EVAL_CHUNK) -> Heads:
    """
    分块前向，拼接各头输出.
    """
    parts = []
    for start in range(0, len(batch), chunk):
        heads, _ = forward_batch(params, batch.take(np.arange(start, min(start + chunk, len(batch)))))
        parts.append(heads)
    return Heads(
        p=np.concatenate([h.p for h in parts]),
        r=np.concatenate([h.r for h in parts]),
        q=np.concatenate([h.q for h in parts]),
        f=None if parts[0].f is None else np.concatenate([h.f for h in parts]),
        lam=None if parts[0].lam is None else np.concatenate([h.lam for h in parts]),
    )


def evaluate_model(
    params: ModelParams,
    records: Sequence[EventRecord],
    cfg: SlotConfig,
    truths: Sequence[GroundTruth] | None = None,
    score_mode: str = ScoreMode.CVR,
    window_days: int = 7,
    min_gauc_groups: int = 10,
    objective: str = "",
) -> EvalReport:
    """在真值标签 (GROUND_TRUTH 策略) 的测试集上评估.

    score_mode=cvr 时在点击样本上用 pCVR 排序，ctcvr 时在全部曝光上用 pCTCVR 排序；
    分桶 log loss 始终使用 pCTCVR 与标签 y∧z。
    """
    if params.spec.num_bins != cfg.num_bins:
        raise ConfigError(f"检查点槽数 {params.spec.num_bins} 与配置 {cfg.num_bins} 不一致")
    gt = snapshot(records, None, LabelPolicy.GROUND_TRUTH, cfg, window_days)
    if len(gt) == 0:
        raise UndefinedMetricError("测试集为空")
    batch = Batch.from_samples(gt.samples, cfg, params.spec.n_fields)
    heads = predict(params, batch)

    label = batch.y * batch.z
    if score_mode == ScoreMode.CVR:
        rows = np.flatnonzero(batch.y == 1)
        scores, labels = heads.r[rows], batch.z[rows]
    elif score_mode == ScoreMode.CTCVR:
        rows = np.arange(len(batch))
        scores, labels = heads.q, label
    else:
        raise ConfigError(f"未知的打分口径: {score_mode}")

    groups = [batch.request_ids[i] for i in rows]
    try:
        g = gauc_with_counts(scores, labels, groups)
        gauc_value, used, skipped = g.value, g.used_groups, g.skipped_groups
    except UndefinedMetricError:
        gauc_value, used, skipped = None, 0, len(set(groups))
    sparse = used < min_gauc_groups
    if sparse:
        logger.warning("[Metrics] GAUC 有效分组过少 (%d < %d)，请以 AUC 为准", used, min_gauc_groups)

    try:
        hist = delay_histogram(gt.samples, cfg)
    except UndefinedMetricError:
        hist = np.zeros(cfg.num_bins)

    calib = None
    if truths is not None:
        by_id = {t.sample_id: t for t in truths}
        clicked = np.flatnonzero(batch.y == 1)
        try:
            true_cvr = [by_id[batch.sample_ids[i]].p_cvr for i in clicked]
        except KeyError as e:
            raise DataError(f"真值文件缺少样本 {e}") from e
        if clicked.size:
            calib = calibration(heads.r[clicked], true_cvr, batch.z[clicked])

    report = EvalReport(
        n_eval=int(rows.size),
        auc=auc(scores, labels),
        gauc=gauc_value,
        gauc_used=used,
        gauc_skipped=skipped,
        gauc_sparse=sparse,
        delay_loss=log_loss_by_delay(heads.q, label, batch.d, cfg.num_bins),
        delay_histogram=hist,
        calibration=calib,
        score_mode=score_mode,
        objective=objective,
        slot=cfg.to_dict(),
    )
    logger.info(
        "[Metrics] %s AUC=%.4f GAUC=%s logloss=%.4f",
        objective or "model",
        report.auc,
        "n/a" if gauc_value is None else f"{gauc_value:.4f}",
        report.delay_loss.overall,
    )
    return report


def write_report(path: Path, report: EvalReport, config: Dict[str, Any]) -> None:
    header = ArtifactHeader(
        magic=SystemConstants.REPORT_MAGIC,
        config=config,
        extras={
            "objective": report.objective,
            "score": report.score_mode,
            "max_delay_days": str(report.slot["max_delay_days"]),
            "seconds_per_slot": str(report.slot["seconds_per_slot"]),
        },
        columns=REPORT_COLUMNS,
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        write_header(fh, header)
        for row in report.to_rows():
            fh.write("\t".join(row) + "\n")


def read_report(path: Path) -> Tuple[EvalReport, Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"评估报告不存在: {path}")
    with path.open("r", encoding="utf-8") as fh:
        lines = iter(fh)
        header, _ = read_header(lines, SystemConstants.REPORT_MAGIC)
        rows = []
        for raw in lines:
            line = raw.rstrip("\n")
            if line:
                cols = line.split("\t")
                if len(cols) != 3:
                    raise DataError(f"{path}: 报告行应有 3 列: {line!r}")
                rows.append(tuple(cols))
    return EvalReport.from_rows(rows, header.extras), header.config


def render_report(report: EvalReport) -> Table:
    table = Table(title=f"评估报告 {report.objective}".strip())
    table.add_column("指标")
    table.add_column("值", justify="right")
    table.add_row("样本数", str(report.n_eval))
    table.add_row("AUC", f"{report.auc:.4f}")
    gauc_text = "n/a" if report.gauc is None else f"{report.gauc:.4f}"
    if report.gauc_sparse:
        gauc_text += " (分组稀疏)"
    table.add_row("GAUC", gauc_text)
    table.add_row("GAUC 分组 (有效/跳过)", f"{report.gauc_used}/{report.gauc_skipped}")
    table.add_row("LogLoss", f"{report.delay_loss.overall:.4f}")
    for k, value in sorted(report.delay_loss.buckets.items()):
        table.add_row(f"LogLoss 延迟槽 {k}", f"{value:.4f}")
    if report.calibration is not None:
        c = report.calibration
        table.add_row("平均预测 pCVR", f"{c.mean_predicted:.4f}")
        table.add_row("真实平均 pCVR", f"{c.mean_true:.4f}")
    return table
