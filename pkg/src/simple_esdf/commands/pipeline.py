"""命令行各子命令背后的流水线步骤：生成 → 快照 → 训练 → 评估 → 汇总."""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from simple_esdf.attribution import daily_snapshots, snapshot, split_by_day, train_observe_ts
from simple_esdf.constants.constants import LabelPolicy, Objective
from simple_esdf.constants.system import SystemConstants
from simple_esdf.events import EventLog, read_event_log, write_event_log, write_snapshot
from simple_esdf.metrics.compare import (
    ComparisonRow,
    aggregate_reports,
    write_comparison,
    write_delay_histogram,
    write_loss_by_day,
)
from simple_esdf.metrics.report import EvalReport, evaluate_model, read_report, write_report
from simple_esdf.model import ModelParams, read_checkpoint, write_checkpoint
from simple_esdf.synthgen import generate, read_truth, summarize, write_truth
from simple_esdf.trainer import TrainHistory, train, train_daily, write_history
from simple_esdf.utils.errors import ConfigError, DataError
from simple_esdf.utils.logging_config import get_logger
from simple_esdf.utils.run_config import RunConfig

logger = get_logger(__name__)

COMPARISON_FILE = "comparison.tsv"
DELAY_HISTOGRAM_FILE = "delay_histogram.tsv"
LOSS_BY_DAY_FILE = "loss_by_day.tsv"


def run_generate(rc: RunConfig, out_dir: Path) -> Dict[str, object]:
    gen = rc.gen_config()
    records, truths = generate(gen, n_workers=rc.n_workers)
    out_dir = Path(out_dir)
    header = rc.to_header()
    write_event_log(
        out_dir / SystemConstants.EVENT_LOG_FILE,
        EventLog(records, gen.feature_dim, gen.n_fields, header),
    )
    write_truth(out_dir / SystemConstants.TRUTH_FILE, truths, header)
    stats = summarize(records, truths, rc.slot)
    stats["slot0_bias"] = float(gen.delay_bias[0])
    return stats


def _check_log_slot(rc: RunConfig, log: EventLog) -> None:
    slot = log.config.get("SLOT")
    if slot and (
        int(slot["MAX_DELAY_DAYS"]) != rc.slot.max_delay_days
        or int(slot["SECONDS_PER_SLOT"]) != rc.slot.seconds_per_slot
    ):
        raise DataError(f"事件日志的时间槽配置 {slot} 与当前配置 {rc.slot.to_dict()} 不一致")


def run_snapshot(rc: RunConfig, log_path: Path, out_path: Path, observe_ts: int | None = None) -> int:
    log = read_event_log(log_path)
    _check_log_slot(rc, log)
    policy = rc.policy()
    train_records, _ = split_by_day(log.records, rc.start_ts, rc.train_days, rc.test_days, rc.slot)
    if observe_ts is None:
        observe_ts = train_observe_ts(rc.start_ts, rc.train_days, rc.slot)
    snap = snapshot(train_records, observe_ts, policy, rc.slot, rc.window_days, rc.first_day)
    write_snapshot(
        out_path, snap.samples, policy, observe_ts, rc.slot, log.feature_dim, log.n_fields, rc.to_header()
    )
    return len(snap)


def run_train(rc: RunConfig, log: EventLog, out_dir: Path) -> Tuple[ModelParams, TrainHistory]:
    """
    按目标对应的策略构造训练快照，训练并写出检查点与历史.
    """
    _check_log_slot(rc, log)
    rc.policy(rc.objective)
    config = rc.train_config()
    slot = rc.slot
    train_records, test_records = split_by_day(log.records, rc.start_ts, rc.train_days, rc.test_days, slot)
    eval_set = snapshot(test_records, None, LabelPolicy.GROUND_TRUTH, slot, rc.window_days) if test_records else None
    observe_ts = train_observe_ts(rc.start_ts, rc.train_days, slot)

    if rc.daily_resnapshot:
        snaps = daily_snapshots(
            train_records, rc.start_ts, rc.train_days, config.policy, slot, rc.window_days, rc.first_day
        )
        params, history = train_daily(config, snaps, eval_set, log.feature_dim, log.n_fields, slot)
    else:
        snap = snapshot(train_records, observe_ts, config.policy, slot, rc.window_days, rc.first_day)
        params, history = train(config, snap, eval_set, log.feature_dim, log.n_fields, slot)

    out_dir = Path(out_dir)
    header = rc.to_header()
    meta = {
        "config": header,
        "objective": config.objective.value,
        "policy": config.policy.value,
        "observe_ts": observe_ts,
        "epochs": len(history),
    }
    write_checkpoint(out_dir / SystemConstants.CHECKPOINT_FILE, params, meta)
    write_history(out_dir / SystemConstants.HISTORY_FILE, history, header)
    return params, history


def run_evaluate(
    rc: RunConfig,
    checkpoint: Path,
    log: EventLog,
    out_path: Path,
    truth_path: Path | None = None,
) -> EvalReport:
    params, meta = read_checkpoint(checkpoint)
    spec = params.spec
    if (spec.feature_dim, spec.n_fields) != (log.feature_dim, log.n_fields):
        raise ConfigError(
            f"检查点特征维度 ({spec.feature_dim}, {spec.n_fields}) 与日志 "
            f"({log.feature_dim}, {log.n_fields}) 不一致"
        )
    _check_log_slot(rc, log)
    _, test_records = split_by_day(log.records, rc.start_ts, rc.train_days, rc.test_days, rc.slot)
    truths = read_truth(truth_path) if truth_path is not None else None
    report = evaluate_model(
        params,
        test_records,
        rc.slot,
        truths=truths,
        score_mode=rc.score_mode,
        window_days=rc.window_days,
        min_gauc_groups=rc.min_gauc_groups,
        objective=meta.get("objective", ""),
    )
    write_report(out_path, report, rc.to_header())
    return report


def run_report(rc: RunConfig, inputs: Sequence[Path], out_dir: Path) -> List[ComparisonRow]:
    reports = [read_report(p)[0] for p in inputs]
    rows = aggregate_reports(reports)
    out_dir = Path(out_dir)
    header = rc.to_header()
    write_comparison(out_dir / COMPARISON_FILE, rows, header)
    write_delay_histogram(out_dir / DELAY_HISTOGRAM_FILE, reports, header)
    write_loss_by_day(out_dir / LOSS_BY_DAY_FILE, reports, header)
    return rows


@dataclass
class ExperimentResult:
    reports: List[Path]
    rows: List[ComparisonRow]


def run_experiment(
    rc_for_seed,
    seeds: Sequence[int],
    objectives: Sequence[Objective],
    out_dir: Path,
) -> ExperimentResult:
    """五目标 × 多种子的对比实验.

    rc_for_seed(seed, objective) 返回该组合的 RunConfig；objective 为 None 时用于生成数据。
    """
    out_dir = Path(out_dir)
    report_paths: List[Path] = []
    for seed in seeds:
        seed_dir = out_dir / f"seed_{seed}"
        run_generate(rc_for_seed(seed, None), seed_dir)
        log = read_event_log(seed_dir / SystemConstants.EVENT_LOG_FILE)
        for objective in objectives:
            rc = rc_for_seed(seed, objective)
            run_dir = seed_dir / objective.value
            logger.info("[Experiment] seed=%d objective=%s", seed, objective.value)
            run_train(rc, log, run_dir)
            path = run_dir / SystemConstants.REPORT_FILE
            run_evaluate(
                rc, run_dir / SystemConstants.CHECKPOINT_FILE, log, path, seed_dir / SystemConstants.TRUTH_FILE
            )
            report_paths.append(path)
    rows = run_report(rc_for_seed(seeds[0], None), report_paths, out_dir)
    return ExperimentResult(report_paths, rows)
