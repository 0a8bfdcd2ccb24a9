"""可闭式求解的 EM 代理问题.

只有一个标量 q 待估，p 与延迟分布 f 固定，全批次：
    E 步: w = q·tail(e) / (p − q + q·tail(e))  (I01)，I11 为 1
    M 步: max_q  a·log q + b·log(p − q)，a = Σ_{I11∪I01} w，b = Σ_{I01} (1 − w)
          ⇒ q = p·a / (a + b)
用于校验 EM 单调性：不完全数据对数似然逐步不减。
"""

from dataclasses import dataclass
from typing import List

import numpy as np

from simple_esdf.model.survival import survival_tails
from simple_esdf.utils.errors import InputError
from simple_esdf.utils.logging_config import get_logger

logger = get_logger(__name__)


@dataclass
class EmSurrogate:
    p: float
    f: np.ndarray  # (T+2,)
    y: np.ndarray
    z: np.ndarray
    e: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=np.float64)
        if not 0.0 < self.p < 1.0:
            raise InputError(f"p 必须在 (0, 1) 内: {self.p}")
        if not np.isclose(self.f.sum(), 1.0):
            raise InputError("延迟分布之和必须为 1")
        self.y = np.asarray(self.y, dtype=np.int64)
        self.z = np.asarray(self.z, dtype=np.int64)
        self.e = np.asarray(self.e, dtype=np.int64)
        self.d = np.asarray(self.d, dtype=np.int64)
        self._i11 = (self.y == 1) & (self.z == 1)
        self._i01 = (self.y == 1) & (self.z == 0)
        self._i00 = self.y == 0
        f_rows = np.broadcast_to(self.f, (self.y.shape[0], self.f.shape[0]))
        self._tail = survival_tails(f_rows, self.e)

    @classmethod
    def sample(cls, n: int, p: float, q: float, f: np.ndarray, seed: int = 0) -> "EmSurrogate":
        """
        按生成过程抽样：y~B(p)，c~B(q/p)，d~f，e 均匀取自 0..T+1，z = c ∧ d ≤ e.
        """
        f = np.asarray(f, dtype=np.float64)
        rng = np.random.default_rng(seed)
        y = (rng.random(n) < p).astype(np.int64)
        c = y * (rng.random(n) < q / p)
        d = rng.choice(f.shape[0], size=n, p=f)
        e = rng.integers(0, f.shape[0], size=n)
        z = (c == 1) & (d <= e)
        return cls(p=p, f=f, y=y, z=z.astype(np.int64), e=e, d=d)

    def incomplete_log_likelihood(self, q: float) -> float:
        """
        Σ_{I11} log(q·f(d)) + Σ_{I01} log(p − q + q·tail(e)) + Σ_{I00} log(1 − p).
        """
        ll = np.log(q * self.f[self.d[self._i11]]).sum()
        ll += np.log(self.p - q + q * self._tail[self._i01]).sum()
        ll += self._i00.sum() * np.log(1.0 - self.p)
        return float(ll)

    def e_step(self, q: float) -> np.ndarray:
        w = np.zeros(self.y.shape[0], dtype=np.float64)
        w[self._i11] = 1.0
        num = q * self._tail[self._i01]
        w[self._i01] = num / (self.p - q + num)
        return w

    def m_step(self, w: np.ndarray) -> float:
        a = w[self._i11 | self._i01].sum()
        b = (1.0 - w[self._i01]).sum()
        if a + b <= 0.0:
            raise InputError("代理问题没有点击样本")
        q = self.p * a / (a + b)
        return float(np.clip(q, 1e-12 * self.p, (1.0 - 1e-12) * self.p))

    def run(self, q0: float, n_iter: int) -> List[float]:
        """
        从 q0 出发迭代 n_iter 次，返回每次 M 步前后的对数似然序列（长度 n_iter+1）.
        """
        q = q0
        trace = [self.incomplete_log_likelihood(q)]
        for _ in range(n_iter):
            q = self.m_step(self.e_step(q))
            trace.append(self.incomplete_log_likelihood(q))
        logger.debug("[EM] 代理问题迭代 %d 次, q=%.6f, ll=%.6f", n_iter, q, trace[-1])
        return trace
