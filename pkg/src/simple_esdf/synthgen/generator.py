"""合成广告日志生成器.

点击、最终转化、转化延迟的真实概率都已知，用作训练与 E 步的校验基准：

    y ~ Bernoulli(sigmoid(b_ctr + Σ w_ctr[x]))
    c | y=1 ~ Bernoulli(sigmoid(b_cvr + Σ w_cvr[x]))
    d | c=1 ~ softmax(b_delay + Σ W_delay[x])     （依赖特征的离散分布，非指数）

记录按固定大小的块生成，每块使用由 (seed, 块号) 派生的随机流，
因此并发 worker 数不影响输出。
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, softmax

from simple_esdf.events.models import EventRecord, FeatureVector
from simple_esdf.events.slots import SlotConfig
from simple_esdf.utils.errors import ConfigError, InputError
from simple_esdf.utils.logging_config import get_logger

logger = get_logger(__name__)

# 随机流编号
_WEIGHT_STREAM = 0
_CALIBRATION_STREAM = 1
_BLOCK_STREAM = 2

_CALIBRATION_SAMPLES = 20000


@dataclass(eq=False)
class GenConfig:
    n_impressions: int
    feature_dim: int
    n_fields: int
    true_ctr_weights: np.ndarray
    true_cvr_weights: np.ndarray
    delay_logit_weights: np.ndarray
    delay_bias: np.ndarray
    ctr_bias: float = -1.2
    cvr_bias: float = -0.8
    day1_mass_target: float = 0.8
    seed: int = 7
    slot: SlotConfig = field(default_factory=SlotConfig)
    zipf_exponent: float = 1.2
    mean_request_size: float = 10.0
    start_ts: int = 1590796800
    n_days: int = 8
    overflow_extra_days: int = 7
    block_size: int = 4096

    def __post_init__(self):
        if self.n_impressions < 0:
            raise ConfigError(f"n_impressions 不能为负: {self.n_impressions}")
        if self.n_fields < 1 or self.feature_dim < self.n_fields:
            raise ConfigError(
                f"feature_dim({self.feature_dim}) 必须 >= n_fields({self.n_fields}) >= 1"
            )
        if not 0.0 < self.day1_mass_target < 1.0:
            raise ConfigError(f"day1_mass_target 必须在 (0,1): {self.day1_mass_target}")
        K = self.slot.num_bins
        expected = {
            "true_ctr_weights": (self.feature_dim,),
            "true_cvr_weights": (self.feature_dim,),
            "delay_logit_weights": (self.feature_dim, K),
            "delay_bias": (K,),
        }
        for name, shape in expected.items():
            actual = np.shape(getattr(self, name))
            if actual != shape:
                raise ConfigError(f"{name} 维度不匹配: 期望 {shape}，实际 {actual}")
        if self.mean_request_size < 1 or self.n_days < 1 or self.block_size < 1:
            raise ConfigError("mean_request_size / n_days / block_size 必须为正")

    @property
    def vocab_per_field(self) -> int:
        return self.feature_dim // self.n_fields

    @classmethod
    def build(
        cls,
        n_impressions: int,
        feature_dim: int = 2000,
        n_fields: int = 8,
        seed: int = 7,
        slot: SlotConfig | None = None,
        weight_scale: float = 0.8,
        delay_weight_scale: float = 1.0,
        hump_height: float = 3.0,
        **kwargs,
    ) -> "GenConfig":
        """
        由种子抽取真实权重，并校准槽 0 偏置以满足 day1_mass_target.
        """
        slot = slot or SlotConfig()
        K = slot.num_bins
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_WEIGHT_STREAM,)))
        ctr_w = rng.normal(0.0, weight_scale, size=feature_dim)
        cvr_w = rng.normal(0.0, weight_scale, size=feature_dim)
        delay_w = rng.normal(0.0, delay_weight_scale, size=(feature_dim, K))

        # 字段 0 的每个取值在槽 2..T 中随机选一个驼峰中心：首日之外的质量集中在
        # 依赖特征的某一天，单一速率的指数分布无法拟合
        k = np.arange(K, dtype=np.float64)
        vocab = feature_dim // max(n_fields, 1)
        centers = rng.integers(min(2, K - 2), K - 1, size=vocab)
        delay_w[:vocab] += hump_height * np.exp(-((k[None, :] - centers[:, None]) ** 2) / 0.5)

        delay_bias = -0.35 * k

        cfg = cls(
            n_impressions=n_impressions,
            feature_dim=feature_dim,
            n_fields=n_fields,
            true_ctr_weights=ctr_w,
            true_cvr_weights=cvr_w,
            delay_logit_weights=delay_w,
            delay_bias=delay_bias,
            seed=seed,
            slot=slot,
            **kwargs,
        )
        cfg.delay_bias[0] = _calibrate_slot0_bias(cfg)
        return cfg

    def to_dict(self) -> Dict[str, object]:
        return {
            "n_impressions": self.n_impressions,
            "feature_dim": self.feature_dim,
            "n_fields": self.n_fields,
            "ctr_bias": self.ctr_bias,
            "cvr_bias": self.cvr_bias,
            "day1_mass_target": self.day1_mass_target,
            "seed": self.seed,
            "slot": self.slot.to_dict(),
            "zipf_exponent": self.zipf_exponent,
            "mean_request_size": self.mean_request_size,
            "start_ts": self.start_ts,
            "n_days": self.n_days,
            "overflow_extra_days": self.overflow_extra_days,
            "block_size": self.block_size,
            "slot0_bias": float(self.delay_bias[0]),
        }


@dataclass(eq=False)
class GroundTruth:
    """
    单条记录的真实概率与潜变量.
    """

    sample_id: str
    y: int
    p_ctr: float
    p_cvr: float
    delay_dist: np.ndarray
    c: int
    d: Optional[int] = None

    def tail(self, e: int) -> float:
        return float(self.delay_dist[e + 1 :].sum())


def _zipf_probs(vocab: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, vocab + 1, dtype=np.float64) ** exponent
    return w / w.sum()


def _draw_features(rng: np.random.Generator, cfg: GenConfig, n: int) -> np.ndarray:
    """
    每个字段按 Zipf 分布抽一个 one-hot 下标，返回 (n, n_fields) 的全局下标.
    """
    vocab = cfg.vocab_per_field
    probs = _zipf_probs(vocab, cfg.zipf_exponent)
    local = rng.choice(vocab, size=(n, cfg.n_fields), p=probs)
    return local + np.arange(cfg.n_fields, dtype=np.int64) * vocab


def _true_heads(cfg: GenConfig, idx: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    p_ctr = expit(cfg.ctr_bias + cfg.true_ctr_weights[idx].sum(axis=1))
    p_cvr = expit(cfg.cvr_bias + cfg.true_cvr_weights[idx].sum(axis=1))
    delay = softmax(cfg.delay_bias + cfg.delay_logit_weights[idx].sum(axis=1), axis=1)
    return p_ctr, p_cvr, delay


def _calibrate_slot0_bias(cfg: GenConfig) -> float:
    """
    求槽 0 偏置，使全体转化中首日转化占比等于 day1_mass_target.
    """
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(_CALIBRATION_STREAM,)))
    idx = _draw_features(rng, cfg, _CALIBRATION_SAMPLES)
    p_ctr, p_cvr, _ = _true_heads(cfg, idx)
    weight = p_ctr * p_cvr
    logits = cfg.delay_bias + cfg.delay_logit_weights[idx].sum(axis=1)

    def slot0_gap(b0: float) -> float:
        shifted = logits.copy()
        shifted[:, 0] += b0 - cfg.delay_bias[0]
        mass = softmax(shifted, axis=1)[:, 0]
        return float(np.dot(weight, mass) / weight.sum()) - cfg.day1_mass_target

    b0 = brentq(slot0_gap, -40.0, 40.0, xtol=1e-12)
    logger.info("[Synthgen] 槽0偏置校准为 %.6f (目标首日占比 %.2f)", b0, cfg.day1_mass_target)
    return float(b0)


def _request_ids(rng: np.random.Generator, block: int, n: int, mean_size: float) -> List[str]:
    ids: List[str] = []
    k = 0
    while len(ids) < n:
        size = 1 + int(rng.poisson(mean_size - 1.0))
        ids.extend([f"q{block:05d}-{k:05d}"] * size)
        k += 1
    return ids[:n]


def _generate_block(cfg: GenConfig, block: int) -> Tuple[List[EventRecord], List[GroundTruth]]:
    start = block * cfg.block_size
    n = min(cfg.block_size, cfg.n_impressions - start)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(_BLOCK_STREAM, block)))
    sps = cfg.slot.seconds_per_slot
    overflow = cfg.slot.overflow_slot

    request_ids = _request_ids(rng, block, n, cfg.mean_request_size)
    # 同一请求共享曝光时间
    request_ts: Dict[str, int] = {}
    for rid in request_ids:
        if rid not in request_ts:
            request_ts[rid] = cfg.start_ts + int(rng.integers(0, cfg.n_days * sps))

    idx = _draw_features(rng, cfg, n)
    p_ctr, p_cvr, delay = _true_heads(cfg, idx)

    # 所有随机量对每条记录都抽取，保证随机流与标签无关
    u_click = rng.random(n)
    u_conv = rng.random(n)
    u_delay = rng.random(n)
    jitter = rng.integers(0, sps, size=n)
    overflow_jitter = rng.integers(0, max(cfg.overflow_extra_days, 1) * sps, size=n)

    y = (u_click < p_ctr).astype(np.int64)
    c = y * (u_conv < p_cvr).astype(np.int64)
    cdf = np.cumsum(delay, axis=1)
    d = np.minimum((u_delay[:, None] > cdf).sum(axis=1), overflow)
    delay_seconds = np.where(d == overflow, overflow * sps + overflow_jitter, d * sps + jitter)

    records: List[EventRecord] = []
    truths: List[GroundTruth] = []
    for i in range(n):
        sample_id = f"s{start + i:09d}"
        ts = request_ts[request_ids[i]]
        clicked = bool(y[i])
        converted = bool(c[i])
        features = FeatureVector(tuple((f, int(idx[i, f]), 1.0) for f in range(cfg.n_fields)))
        records.append(
            EventRecord(
                request_id=request_ids[i],
                sample_id=sample_id,
                features=features,
                y=int(y[i]),
                impression_ts=ts,
                click_ts=ts if clicked else None,
                conversion_ts=ts + int(delay_seconds[i]) if converted else None,
            )
        )
        truths.append(
            GroundTruth(
                sample_id=sample_id,
                y=int(y[i]),
                p_ctr=float(p_ctr[i]),
                p_cvr=float(p_cvr[i]),
                delay_dist=delay[i].copy(),
                c=int(c[i]),
                d=int(d[i]) if converted else None,
            )
        )
    return records, truths


def generate(cfg: GenConfig, n_workers: int = 1) -> Tuple[List[EventRecord], List[GroundTruth]]:
    """
    生成事件日志及对应真值，给定种子完全确定，与 n_workers 无关.
    """
    n_blocks = -(-cfg.n_impressions // cfg.block_size)
    logger.info(
        "[Synthgen] 生成 %d 条曝光，%d 个块，%d 个 worker",
        cfg.n_impressions,
        n_blocks,
        n_workers,
    )
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers, thread_name_prefix="synthgen") as pool:
            parts = list(pool.map(lambda b: _generate_block(cfg, b), range(n_blocks)))
    else:
        parts = [_generate_block(cfg, b) for b in range(n_blocks)]

    records: List[EventRecord] = []
    truths: List[GroundTruth] = []
    for block_records, block_truths in parts:
        records.extend(block_records)
        truths.extend(block_truths)
    return records, truths


def oracle_posterior(gt: GroundTruth, e: int) -> float:
    """
    已点击且在流逝 e 个槽时仍未观测到转化的样本，其最终转化的真实后验.

    w = pCVR·tail(e) / (1 − pCVR + pCVR·tail(e))
    """
    if gt.y != 1:
        raise InputError(f"{gt.sample_id}: 未点击样本没有转化后验")
    if not 0 <= e < len(gt.delay_dist):
        raise InputError(f"流逝槽越界: {e}")
    tail = gt.tail(e)
    numerator = gt.p_cvr * tail
    return numerator / (1.0 - gt.p_cvr + numerator)


def summarize(records: List[EventRecord], truths: List[GroundTruth], slot: SlotConfig) -> Dict[str, object]:
    """
    生成摘要：点击率、转化率、真实延迟槽直方图.
    """
    n = len(records)
    clicks = sum(r.y for r in records)
    d = np.array([t.d for t in truths if t.c == 1], dtype=np.int64)
    hist = np.bincount(d, minlength=slot.num_bins).astype(np.float64)
    if d.size:
        hist /= d.size
    return {
        "impressions": n,
        "clicks": clicks,
        "conversions": int(d.size),
        "click_rate": clicks / n if n else 0.0,
        "conversion_rate": d.size / clicks if clicks else 0.0,
        "delay_histogram": hist.tolist(),
    }
