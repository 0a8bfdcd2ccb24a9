"""共享 embedding 的多塔网络.

    emb = concat_f(E[x_f] · v_f)
    p = sigmoid(ctr_tower(emb))
    r = sigmoid(cvr_tower(emb))               q = p · r
    f = softmax(delay_tower([emb, onehot(e)]))   （DFM 变体: λ = softplus(delay_tower(emb))）

CTR/CVR 塔不接收 e，流逝时间只影响延迟头。反向传播按固定结构手写，
目标函数只需给出 loss 对三个头 logit 的梯度。
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

import numpy as np
from scipy.special import expit, softmax

from simple_esdf.constants.constants import DelayHead
from simple_esdf.events.models import FeatureVector
from simple_esdf.model.batch import Batch
from simple_esdf.utils.errors import ConfigError, InputError, NumericalError
from simple_esdf.utils.logging_config import get_logger

logger = get_logger(__name__)

TOWERS = ("ctr", "cvr", "delay")


@dataclass(frozen=True)
class ModelSpec:
    feature_dim: int
    n_fields: int
    num_bins: int
    emb_dim: int = 8
    tower_hidden: Tuple[int, ...] = (64, 32)
    delay_head: str = DelayHead.SOFTMAX

    def __post_init__(self):
        object.__setattr__(self, "tower_hidden", tuple(int(h) for h in self.tower_hidden))
        if min(self.feature_dim, self.n_fields, self.emb_dim) < 1 or self.num_bins < 3:
            raise ConfigError(f"模型维度非法: {self}")
        if any(h < 1 for h in self.tower_hidden):
            raise ConfigError(f"塔宽度必须为正: {self.tower_hidden}")
        if self.delay_head not in (DelayHead.SOFTMAX, DelayHead.RATE):
            raise ConfigError(f"未知的延迟头类型: {self.delay_head}")

    @property
    def embed_width(self) -> int:
        return self.n_fields * self.emb_dim

    def layer_sizes(self, tower: str) -> List[Tuple[int, int]]:
        fan_in = self.embed_width
        fan_out = 1
        if tower == "delay" and self.delay_head == DelayHead.SOFTMAX:
            fan_in += self.num_bins
            fan_out = self.num_bins
        widths = [fan_in, *self.tower_hidden, fan_out]
        return list(zip(widths[:-1], widths[1:]))

    def to_dict(self) -> dict:
        return {
            "feature_dim": self.feature_dim,
            "n_fields": self.n_fields,
            "num_bins": self.num_bins,
            "emb_dim": self.emb_dim,
            "tower_hidden": list(self.tower_hidden),
            "delay_head": self.delay_head,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        return cls(**{**data, "tower_hidden": tuple(data["tower_hidden"])})


@dataclass(eq=False)
class ModelParams:
    """
    参数 Θ = {embedding, θ_ctr, θ_cvr, θ_delay}，按名字存放的扁平数组.
    """

    spec: ModelSpec
    arrays: Dict[str, np.ndarray]
    seed: int = 0

    def copy(self) -> "ModelParams":
        return ModelParams(self.spec, {k: v.copy() for k, v in self.arrays.items()}, self.seed)

    def n_layers(self, tower: str) -> int:
        return len(self.spec.tower_hidden) + 1

    def assert_finite(self) -> None:
        for name, arr in self.arrays.items():
            if not np.all(np.isfinite(arr)):
                raise NumericalError("参数出现非有限值", {"array": name})

    def equals(self, other: "ModelParams") -> bool:
        """
        逐位比较（用于确定性校验）.
        """
        if self.spec != other.spec or self.arrays.keys() != other.arrays.keys():
            return False
        return all(np.array_equal(v, other.arrays[k]) for k, v in self.arrays.items())


def init_params(spec: ModelSpec, seed: int) -> ModelParams:
    """
    embedding ~ U[-0.01, 0.01]；权重 ~ U[-√(3/fan_in), √(3/fan_in)]；偏置为 0.
    """
    rng = np.random.default_rng(seed)
    arrays: Dict[str, np.ndarray] = {
        "embedding": rng.uniform(-0.01, 0.01, size=(spec.feature_dim, spec.emb_dim))
    }
    for tower in TOWERS:
        for layer, (fan_in, fan_out) in enumerate(spec.layer_sizes(tower)):
            limit = np.sqrt(3.0 / fan_in)
            arrays[f"{tower}.{layer}.weight"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            arrays[f"{tower}.{layer}.bias"] = np.zeros(fan_out)
    return ModelParams(spec, arrays, seed)


@dataclass
class Heads:
    p: np.ndarray
    r: np.ndarray
    q: np.ndarray
    f: np.ndarray | None = None  # (B, T+2)
    lam: np.ndarray | None = None  # (B,)

    def row(self, i: int) -> "Heads":
        return Heads(
            p=self.p[i],
            r=self.r[i],
            q=self.q[i],
            f=None if self.f is None else self.f[i],
            lam=None if self.lam is None else self.lam[i],
        )

    @classmethod
    def from_probs(cls, p, r, f=None, lam=None) -> "Heads":
        """
        直接由概率构造（测试与真值对照时使用）.
        """
        p = np.asarray(p, dtype=np.float64)
        r = np.asarray(r, dtype=np.float64)
        return cls(
            p=p,
            r=r,
            q=p * r,
            f=None if f is None else np.asarray(f, dtype=np.float64),
            lam=None if lam is None else np.asarray(lam, dtype=np.float64),
        )


@dataclass
class HeadGrads:
    """
    loss 对各头 logit 的梯度.
    """

    ctr: np.ndarray
    cvr: np.ndarray
    delay: np.ndarray  # (B, T+2) 或 (B, 1)


@dataclass
class ForwardCache:
    batch: Batch
    emb: np.ndarray
    layers: Dict[str, List[Tuple[np.ndarray, np.ndarray]]] = field(default_factory=dict)


def _check_inputs(spec: ModelSpec, batch: Batch) -> None:
    if batch.idx.size and (batch.idx.min() < 0 or batch.idx.max() >= spec.feature_dim):
        bad = np.flatnonzero(((batch.idx < 0) | (batch.idx >= spec.feature_dim)).any(axis=1))
        raise InputError(f"特征下标越界 (feature_dim={spec.feature_dim})，样本 {bad[:5].tolist()}")
    if batch.e.size and (batch.e.min() < 0 or batch.e.max() >= spec.num_bins):
        raise InputError(f"流逝槽越界，应在 [0, {spec.num_bins - 1}]")


def _mlp_forward(params: ModelParams, tower: str, x: np.ndarray):
    caches = []
    h = x
    n = params.n_layers(tower)
    for layer in range(n):
        a = h @ params.arrays[f"{tower}.{layer}.weight"] + params.arrays[f"{tower}.{layer}.bias"]
        caches.append((h, a))
        h = np.maximum(a, 0.0) if layer < n - 1 else a
    return h, caches


def _mlp_backward(params: ModelParams, tower: str, caches, grad_out: np.ndarray, grads: Dict[str, np.ndarray]) -> np.ndarray:
    g = grad_out
    n = params.n_layers(tower)
    for layer in reversed(range(n)):
        h, a = caches[layer]
        if layer < n - 1:
            g = g * (a > 0.0)
        weight = params.arrays[f"{tower}.{layer}.weight"]
        grads[f"{tower}.{layer}.weight"] = h.T @ g
        grads[f"{tower}.{layer}.bias"] = g.sum(axis=0)
        g = g @ weight.T
    return g


def forward_batch(params: ModelParams, batch: Batch) -> Tuple[Heads, ForwardCache]:
    spec = params.spec
    _check_inputs(spec, batch)
    n = len(batch)
    emb = (params.arrays["embedding"][batch.idx] * batch.val[..., None]).reshape(n, spec.embed_width)
    cache = ForwardCache(batch=batch, emb=emb)

    ctr_logit, cache.layers["ctr"] = _mlp_forward(params, "ctr", emb)
    cvr_logit, cache.layers["cvr"] = _mlp_forward(params, "cvr", emb)
    if spec.delay_head == DelayHead.SOFTMAX:
        delay_in = np.concatenate([emb, np.eye(spec.num_bins)[batch.e]], axis=1)
    else:
        delay_in = emb
    delay_logit, cache.layers["delay"] = _mlp_forward(params, "delay", delay_in)

    p = expit(ctr_logit[:, 0])
    r = expit(cvr_logit[:, 0])
    heads = Heads(p=p, r=r, q=p * r)
    if spec.delay_head == DelayHead.SOFTMAX:
        heads.f = softmax(delay_logit, axis=1)
    else:
        heads.lam = np.logaddexp(0.0, delay_logit[:, 0])
    return heads, cache


def forward(params: ModelParams, x: FeatureVector, e: int) -> Heads:
    """
    单样本前向.
    """
    x.validate(params.spec.feature_dim, params.spec.n_fields)
    idx, val = x.dense_slots(params.spec.n_fields)
    batch = Batch(
        idx=idx[None, :],
        val=val[None, :],
        y=np.zeros(1, dtype=np.int64),
        z=np.zeros(1, dtype=np.int64),
        e=np.array([e], dtype=np.int64),
        d=np.full(1, -1, dtype=np.int64),
        u_d=np.zeros(1),
        u_e=np.zeros(1),
        sample_ids=[""],
        request_ids=[""],
    )
    heads, _ = forward_batch(params, batch)
    return heads.row(0)


def backward(params: ModelParams, cache: ForwardCache, head_grads: HeadGrads) -> Dict[str, np.ndarray]:
    spec = params.spec
    grads: Dict[str, np.ndarray] = {}
    d_emb = _mlp_backward(params, "ctr", cache.layers["ctr"], head_grads.ctr[:, None], grads)
    d_emb = d_emb + _mlp_backward(params, "cvr", cache.layers["cvr"], head_grads.cvr[:, None], grads)
    delay_grad = head_grads.delay if head_grads.delay.ndim == 2 else head_grads.delay[:, None]
    d_delay_in = _mlp_backward(params, "delay", cache.layers["delay"], delay_grad, grads)
    d_emb = d_emb + d_delay_in[:, : spec.embed_width]

    batch = cache.batch
    contrib = d_emb.reshape(len(batch), spec.n_fields, spec.emb_dim) * batch.val[..., None]
    g_emb = np.zeros_like(params.arrays["embedding"])
    np.add.at(g_emb, batch.idx, contrib)
    grads["embedding"] = g_emb
    return {name: grads[name] for name in params.arrays}


# 目标函数：(heads, batch) -> 带 breakdown / per_sample / grads 的结果
ObjectiveFn = Callable[[Heads, Batch], object]


def gradient(params: ModelParams, batch: Batch, objective: ObjectiveFn):
    """
    目标函数总和对全部参数的精确梯度，返回 (grads, objective_result).
    """
    heads, cache = forward_batch(params, batch)
    result = objective(heads, batch)
    if not np.isfinite(result.breakdown.total):
        bad = np.flatnonzero(~np.isfinite(result.per_sample))
        raise NumericalError(
            "目标函数值非有限",
            {"samples": [batch.sample_ids[i] for i in bad[:10]]},
        )
    return backward(params, cache, result.grads), result


@dataclass
class GradientCheckReport:
    n_checked: int
    max_abs_err: float
    max_rel_err: float
    failures: List[Tuple[str, int, float, float]]
    n_skipped: int = 0  # 扰动跨过 ReLU 拐点而跳过的坐标

    @property
    def passed(self) -> bool:
        return not self.failures


def _perturbed_total(params: ModelParams, batch: Batch, objective: ObjectiveFn):
    heads, cache = forward_batch(params, batch)
    pattern = [a > 0.0 for tower in TOWERS for _, a in cache.layers[tower][:-1]]
    return float(objective(heads, batch).breakdown.total), pattern


def check_gradient(
    params: ModelParams,
    batch: Batch,
    objective: ObjectiveFn,
    n_coords: int = 50,
    step: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-8,
    seed: int = 0,
) -> GradientCheckReport:
    """中心差分校验解析梯度.

    随机抽坐标，一半来自本批次实际用到的 embedding 行；正负扰动改变任一 ReLU
    激活模式的坐标不可微，跳过并重抽。判定 |g_a − g_n| <= rtol·max(|g_a|, |g_n|) + atol + 舍入噪声。
    """
    analytic, _ = gradient(params, batch, objective)
    base_total, base_pattern = _perturbed_total(params, batch, objective)
    # 差分自身的舍入误差量级
    noise = 64.0 * np.finfo(np.float64).eps * max(abs(base_total), 1.0) / step
    shifted = params.copy()
    rng = np.random.default_rng(seed)
    rows = np.unique(batch.idx)
    emb_dim = params.spec.emb_dim
    tower_keys = [k for k in params.arrays if k != "embedding"]

    def draw(i: int) -> Tuple[str, int]:
        if i % 2 == 0:
            row = int(rng.choice(rows))
            return "embedding", row * emb_dim + int(rng.integers(emb_dim))
        key = tower_keys[int(rng.integers(len(tower_keys)))]
        return key, int(rng.integers(params.arrays[key].size))

    failures = []
    max_abs = max_rel = 0.0
    checked = skipped = 0
    attempt = 0
    while checked < n_coords and attempt < 4 * n_coords:
        key, j = draw(attempt)
        attempt += 1
        arr = shifted.arrays[key].reshape(-1)
        orig = arr[j]
        arr[j] = orig + step
        plus, plus_pattern = _perturbed_total(shifted, batch, objective)
        arr[j] = orig - step
        minus, minus_pattern = _perturbed_total(shifted, batch, objective)
        arr[j] = orig
        smooth = all(
            np.array_equal(b, p) and np.array_equal(b, m)
            for b, p, m in zip(base_pattern, plus_pattern, minus_pattern)
        )
        if not smooth:
            skipped += 1
            continue
        checked += 1
        numeric = (plus - minus) / (2.0 * step)
        exact = float(analytic[key].reshape(-1)[j])
        err = abs(exact - numeric)
        scale = max(abs(exact), abs(numeric))
        max_abs = max(max_abs, err)
        if scale > 0:
            max_rel = max(max_rel, err / scale)
        if err > rtol * scale + atol + noise:
            failures.append((key, j, exact, numeric))

    report = GradientCheckReport(checked, max_abs, max_rel, failures, skipped)
    if failures:
        logger.warning("[GradCheck] %d/%d 个坐标未通过，示例: %s", len(failures), checked, failures[:3])
    else:
        logger.debug("[GradCheck] %d 个坐标通过 (跳过 %d)，最大相对误差 %.3e", checked, skipped, max_rel)
    return report
