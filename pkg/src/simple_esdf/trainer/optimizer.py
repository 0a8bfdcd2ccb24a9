from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from simple_esdf.utils.errors import NumericalError

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]

    @classmethod
    def zeros(cls, arrays: Dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in arrays.items()},
            v={k: np.zeros_like(a) for k, a in arrays.items()},
        )


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    moments: AdamState,
    step_index: int,
    lr: float,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """带偏差修正的 Adam 更新，原地修改 params 与 moments 并返回二者.

    step_index 从 1 开始计数。
    """
    if step_index < 1:
        raise ValueError(f"step_index 从 1 开始: {step_index}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = np.flatnonzero(~np.isfinite(g.reshape(-1)))
            raise NumericalError(
                "梯度出现非有限值", {"array": name, "coords": bad[:10].tolist(), "step": step_index}
            )
    c1 = 1.0 - BETA1**step_index
    c2 = 1.0 - BETA2**step_index
    for name, g in grads.items():
        m = moments.m[name]
        v = moments.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + EPSILON)
    return params, moments
