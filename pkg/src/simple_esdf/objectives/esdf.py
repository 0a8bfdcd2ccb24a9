"""ESDF 期望对数似然与 E 步.

隐变量 c 为“最终是否转化”。E 步给出未观测转化样本 (I01) 的后验
w = P(c=1 | y=1, z=0, e)，M 步把 w 当作常数最大化

    L = Σ w·log q + Σ (1−w)[y·log(p−q) + (1−y)·log(1−p)]
      + Σ w·z·log f(t) + Σ w·(1−z)·log tail(t)

其中 q = p·r，因此 log(p−q) = log p + log(1−r)。
"""

from dataclasses import dataclass

import numpy as np

from simple_esdf.events.models import IndexPartition
from simple_esdf.model.batch import Batch
from simple_esdf.model.network import HeadGrads, Heads
from simple_esdf.model.survival import survival_tail, survival_tails
from simple_esdf.objectives.base import (
    LossBreakdown,
    ObjectiveResult,
    clamped_log,
    ensure_finite,
)
from simple_esdf.utils.errors import NumericalError
from simple_esdf.utils.logging_config import get_logger

logger = get_logger(__name__)


@dataclass
class EStepWeights:
    w: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)

    def __len__(self) -> int:
        return self.w.shape[0]


def e_step(heads: Heads, part: IndexPartition, e: np.ndarray) -> EStepWeights:
    """
    I11 → 1，I00 → 0，I01 → q·tail(e) / (p − q + q·tail(e)).

    heads 必须以各样本自己的 e 作为延迟塔输入计算。
    """
    n = len(part)
    w = np.zeros(n, dtype=np.float64)
    w[part.I11] = 1.0
    rows = np.asarray(part.I01, dtype=np.int64)
    if rows.size:
        p = heads.p[rows]
        q = heads.q[rows]
        tail = survival_tails(heads.f[rows], np.asarray(e)[rows])
        num = q * tail
        den = p - q + num
        bad = np.flatnonzero(~(den > 0.0))
        if bad.size:
            raise NumericalError(
                "E 步分母非正", {"term": "e_step", "samples": rows[bad[:10]].tolist()}
            )
        w[rows] = np.clip(num / den, 0.0, 1.0)
    return EStepWeights(w)


def e_step_batch(heads: Heads, batch: Batch) -> EStepWeights:
    return e_step(heads, IndexPartition.from_flags(batch.y, batch.z), batch.e)


def _esdf_terms(heads: Heads, w: np.ndarray, batch: Batch) -> ObjectiveResult:
    y = batch.y.astype(np.float64)
    z = batch.z.astype(np.float64)
    n, k = heads.f.shape
    rows = np.arange(n)

    lp, mp = clamped_log(heads.p)
    l1p, m1p = clamped_log(1.0 - heads.p)
    lr, mr = clamped_log(heads.r)
    l1r, m1r = clamped_log(1.0 - heads.r)

    # 观测到转化的样本取 f(d)，其余取 tail(e)
    t = np.where(batch.z == 1, batch.d, batch.e)
    t_obs = np.where(batch.z == 1, batch.d, 0)
    lf, mf = clamped_log(heads.f[rows, t_obs])
    tail = survival_tails(heads.f, t)
    ltail, mtail = clamped_log(tail)

    conv = w * (lp + lr)
    click = (1.0 - w) * (y * (lp + l1r) + (1.0 - y) * l1p)
    delay_obs = w * z * lf
    cens = w * (1.0 - z) > 0.0
    delay_cens = np.where(cens, w * (1.0 - z) * ltail, 0.0)

    for name, values in (
        ("conversion", conv),
        ("click", click),
        ("delay_observed", delay_obs),
        ("delay_censored", delay_cens),
    ):
        ensure_finite(name, values, batch.sample_ids)

    # 对 L 的 logit 梯度，取负号后即为 loss 梯度
    d_a = w * mp * (1.0 - heads.p) + (1.0 - w) * (
        y * mp * (1.0 - heads.p) - (1.0 - y) * m1p * heads.p
    )
    d_b = w * mr * (1.0 - heads.r) - (1.0 - w) * y * m1r * heads.r

    onehot = np.zeros((n, k))
    onehot[rows, t_obs] = 1.0
    after = np.arange(k)[None, :] > t[:, None]
    safe_tail = np.where(tail > 0.0, tail, 1.0)
    h = np.where(tail[:, None] > 0.0, heads.f * after / safe_tail[:, None], 0.0)
    d_g = (w * z * mf)[:, None] * (onehot - heads.f) + (
        np.where(cens, w * (1.0 - z) * mtail, 0.0)
    )[:, None] * (h - heads.f)

    breakdown = LossBreakdown.from_terms(
        click=-click.sum(),
        conversion=-conv.sum(),
        delay_observed=-delay_obs.sum(),
        delay_censored=-delay_cens.sum(),
    )
    per_sample = -(conv + click + delay_obs + delay_cens)
    return ObjectiveResult(breakdown, per_sample, HeadGrads(ctr=-d_a, cvr=-d_b, delay=-d_g))


def esdf_loss(heads: Heads, weights: EStepWeights, samples: Batch) -> LossBreakdown:
    """
    ESDF 负期望对数似然（最小化口径）.
    """
    return _esdf_terms(heads, weights.w, samples).breakdown


class EsdfObjective:
    """
    M 步目标：weights 为 None 时在当前批次上现算 E 步，并冻结为常数.
    """

    def __init__(self, weights: EStepWeights | None = None):
        self.weights = weights

    def __call__(self, heads: Heads, batch: Batch) -> ObjectiveResult:
        weights = self.weights if self.weights is not None else e_step_batch(heads, batch)
        return _esdf_terms(heads, weights.w, batch)

    def frozen(self, heads: Heads, batch: Batch) -> "EsdfObjective":
        """
        以当前头输出算一次 E 步，返回权重固定的目标.
        """
        return EsdfObjective(e_step_batch(heads, batch))


def likelihood_outcome_check(heads: Heads, e: int) -> float:
    """
    流逝 e 时所有可观测结果的总概率：未点击 + 各槽已转化 + 点击未观测转化，恒为 1.
    """
    p = float(heads.p)
    q = float(heads.q)
    f = np.asarray(heads.f, dtype=np.float64)
    observed = q * float(f[: min(e, f.shape[0] - 1) + 1].sum())
    tail = survival_tail(f, e)
    return (1.0 - p) + observed + (p - q + q * tail)
