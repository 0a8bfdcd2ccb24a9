from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from simple_esdf.constants.constants import PROB_EPS
from simple_esdf.model.network import HeadGrads
from simple_esdf.utils.errors import NumericalError

TERM_NAMES = ("click", "conversion", "delay_observed", "delay_censored")


@dataclass
class LossBreakdown:
    """
    负对数似然（最小化口径）及其四个分项.
    """

    total: float
    terms: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_terms(cls, **terms: float) -> "LossBreakdown":
        terms = {name: float(terms.get(name, 0.0)) for name in TERM_NAMES}
        return cls(total=float(sum(terms.values())), terms=terms)

    def __add__(self, other: "LossBreakdown") -> "LossBreakdown":
        merged = {k: self.terms.get(k, 0.0) + other.terms.get(k, 0.0) for k in TERM_NAMES}
        return LossBreakdown.from_terms(**merged)


@dataclass
class ObjectiveResult:
    breakdown: LossBreakdown
    per_sample: np.ndarray
    grads: HeadGrads


def clamped_log(x: np.ndarray, upper: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """
    log(clip(x, ε, 1−ε))，同时返回未被截断的掩码（被截断处梯度为 0）.
    """
    x = np.asarray(x, dtype=np.float64)
    hi = 1.0 - PROB_EPS if upper else np.inf
    inside = (x >= PROB_EPS) & (x <= hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(np.clip(x, PROB_EPS, hi)), inside.astype(np.float64)


def ensure_finite(name: str, values: np.ndarray, sample_ids=None) -> None:
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        ids = bad[:10].tolist() if sample_ids is None else [sample_ids[i] for i in bad[:10]]
        raise NumericalError(f"损失项 {name} 出现非有限值", {"term": name, "samples": ids})
