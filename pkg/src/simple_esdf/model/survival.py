import numpy as np

from simple_esdf.utils.errors import InputError


def survival_tail(f: np.ndarray, e: int) -> float:
    """
    Σ_{t=e+1}^{T+1} f(t)；e = T+1 时为空和 0.
    """
    f = np.asarray(f, dtype=np.float64)
    if not 0 <= e < f.shape[-1]:
        raise InputError(f"流逝槽越界: e={e}, 槽数={f.shape[-1]}")
    return float(f[e + 1 :].sum())


def survival_tails(f: np.ndarray, t: np.ndarray) -> np.ndarray:
    """
    按行计算尾部和：out[i] = Σ_{k > t[i]} f[i, k].
    """
    f = np.asarray(f, dtype=np.float64)
    t = np.asarray(t, dtype=np.int64)
    if t.size and (t.min() < 0 or t.max() >= f.shape[1]):
        raise InputError("流逝槽越界")
    mask = np.arange(f.shape[1])[None, :] > t[:, None]
    return (f * mask).sum(axis=1)
