from .calibration import CalibrationReport, calibration
from .compare import ComparisonRow, aggregate_reports
from .loss import DelayLoss, log_loss, log_loss_by_delay
from .ranking import GaucResult, auc, auc_pairwise, gauc, gauc_with_counts, rela_impr
from .report import EvalReport, evaluate_model, read_report, write_report

__all__ = [
    "CalibrationReport",
    "ComparisonRow",
    "DelayLoss",
    "EvalReport",
    "GaucResult",
    "aggregate_reports",
    "auc",
    "auc_pairwise",
    "calibration",
    "evaluate_model",
    "gauc",
    "gauc_with_counts",
    "log_loss",
    "log_loss_by_delay",
    "read_report",
    "rela_impr",
    "write_report",
]
