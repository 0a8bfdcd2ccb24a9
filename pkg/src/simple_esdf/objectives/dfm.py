"""指数延迟基线.

延迟塔输出单个正速率 λ = softplus(g)，不接收流逝时间。
    已点击已转化:   log r + log λ − λ·u_d
    已点击未转化:   log(1 − r + r·exp(−λ·u_e))
    另加 p 上的 CTR 交叉熵，未点击样本即 log(1−p)。
"""

import numpy as np

from simple_esdf.model.batch import Batch
from simple_esdf.model.network import HeadGrads, Heads
from simple_esdf.objectives.base import LossBreakdown, ObjectiveResult, clamped_log, ensure_finite
from simple_esdf.utils.errors import ConfigError, NumericalError


def _dfm_terms(heads: Heads, batch: Batch) -> ObjectiveResult:
    if heads.lam is None:
        raise ConfigError("DFM 目标需要速率型延迟头 (MODEL.DELAY_HEAD=rate)")
    lam = np.asarray(heads.lam, dtype=np.float64)
    bad = np.flatnonzero(~(lam > 0.0))
    if bad.size:
        raise NumericalError(
            "延迟速率 λ 必须为正", {"term": "delay_rate", "samples": [batch.sample_ids[i] for i in bad[:10]]}
        )

    y = batch.y.astype(np.float64)
    z = batch.z.astype(np.float64)
    unconv = y * (1.0 - z)
    p, r = heads.p, heads.r

    lp, mp = clamped_log(p)
    l1p, m1p = clamped_log(1.0 - p)
    lr, mr = clamped_log(r)
    llam, mlam = clamped_log(lam, upper=False)
    s = np.exp(-lam * batch.u_e)
    a = 1.0 - r + r * s
    la, ma = clamped_log(a, upper=False)

    click = y * lp + (1.0 - y) * l1p
    conv = z * lr + unconv * la
    delay_obs = z * (llam - lam * batch.u_d)
    ensure_finite("click", click, batch.sample_ids)
    ensure_finite("conversion", conv, batch.sample_ids)
    ensure_finite("delay_observed", delay_obs, batch.sample_ids)

    # dλ/dg = sigmoid(g) = 1 − exp(−λ)
    dlam = -np.expm1(-lam)
    safe_a = np.where(a > 0.0, a, 1.0)
    d_a = y * mp * (1.0 - p) - (1.0 - y) * m1p * p
    d_b = z * mr * (1.0 - r) + unconv * ma * r * (1.0 - r) * (s - 1.0) / safe_a
    d_g = z * (mlam / lam - batch.u_d) * dlam - unconv * ma * r * s * batch.u_e * dlam / safe_a

    breakdown = LossBreakdown.from_terms(
        click=-click.sum(), conversion=-conv.sum(), delay_observed=-delay_obs.sum()
    )
    return ObjectiveResult(
        breakdown,
        -(click + conv + delay_obs),
        HeadGrads(ctr=-d_a, cvr=-d_b, delay=-d_g),
    )


def dfm_loss(heads: Heads, samples: Batch) -> float:
    return _dfm_terms(heads, samples).breakdown.total


class DfmObjective:
    def __call__(self, heads: Heads, batch: Batch) -> ObjectiveResult:
        return _dfm_terms(heads, batch)
