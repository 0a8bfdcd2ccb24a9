import numpy as np

from simple_esdf.model.batch import Batch
from simple_esdf.model.network import HeadGrads, Heads
from simple_esdf.objectives.base import LossBreakdown, ObjectiveResult, clamped_log, ensure_finite


def _esmm_terms(heads: Heads, batch: Batch) -> ObjectiveResult:
    """
    CTR 交叉熵 (p vs y) 加 CTCVR 交叉熵 (q vs y∧z)，延迟头不参与.
    """
    y = batch.y.astype(np.float64)
    label = (batch.y * batch.z).astype(np.float64)
    p, r, q = heads.p, heads.r, heads.q

    lp, mp = clamped_log(p)
    l1p, m1p = clamped_log(1.0 - p)
    l1q, m1q = clamped_log(1.0 - q)

    click = y * lp + (1.0 - y) * l1p
    # log q = log p + log r，分开取对数避免 q 很小时的截断
    lr, mr = clamped_log(r)
    conv = label * (lp + lr) + (1.0 - label) * l1q
    ensure_finite("click", click, batch.sample_ids)
    ensure_finite("conversion", conv, batch.sample_ids)

    safe = np.where(1.0 - q > 0.0, 1.0 - q, 1.0)
    d_a = (
        y * mp * (1.0 - p)
        - (1.0 - y) * m1p * p
        + label * mp * (1.0 - p)
        - (1.0 - label) * m1q * q * (1.0 - p) / safe
    )
    d_b = label * mr * (1.0 - r) - (1.0 - label) * m1q * q * (1.0 - r) / safe

    delay_shape = heads.f.shape if heads.f is not None else (len(batch), 1)
    breakdown = LossBreakdown.from_terms(click=-click.sum(), conversion=-conv.sum())
    return ObjectiveResult(
        breakdown,
        -(click + conv),
        HeadGrads(ctr=-d_a, cvr=-d_b, delay=np.zeros(delay_shape)),
    )


def esmm_loss(heads: Heads, samples: Batch) -> float:
    return _esmm_terms(heads, samples).breakdown.total


class EsmmObjective:
    """
    硬标签目标，ESMM / NAIVE / SHIFT 共用，区别只在快照的标签策略.
    """

    def __call__(self, heads: Heads, batch: Batch) -> ObjectiveResult:
        return _esmm_terms(heads, batch)
