from dataclasses import dataclass

import numpy as np

from simple_esdf.utils.errors import UndefinedMetricError


@dataclass
class CalibrationReport:
    n: int
    mean_predicted: float
    mean_true: float  # 合成真值 pCVR 的均值
    mean_observed: float  # 归因窗内实际转化率

    @property
    def relative_error(self) -> float:
        return (self.mean_predicted - self.mean_true) / self.mean_true


def calibration(predicted, true_probs, labels) -> CalibrationReport:
    predicted = np.asarray(predicted, dtype=np.float64)
    if predicted.size == 0:
        raise UndefinedMetricError("校准报告需要至少一个点击样本")
    true_probs = np.asarray(true_probs, dtype=np.float64)
    return CalibrationReport(
        n=int(predicted.size),
        mean_predicted=float(predicted.mean()),
        mean_true=float(true_probs.mean()),
        mean_observed=float(np.asarray(labels, dtype=np.float64).mean()),
    )
