from enum import Enum


class LabelPolicy(str, Enum):
    """
    训练/测试标签构造策略.
    """

    ESMM_DAY1 = "esmm_day1"
    NAIVE_DROP = "naive_drop"
    SHIFT = "shift"
    FULL_CENSORED = "full_censored"
    GROUND_TRUTH = "ground_truth"


class Objective(str, Enum):
    """
    训练目标.
    """

    ESDF = "esdf"
    ESMM = "esmm"
    NAIVE = "naive"
    SHIFT = "shift"
    DFM = "dfm"


# 每个训练目标要求的快照策略
OBJECTIVE_POLICY = {
    Objective.ESDF: LabelPolicy.FULL_CENSORED,
    Objective.DFM: LabelPolicy.FULL_CENSORED,
    Objective.ESMM: LabelPolicy.ESMM_DAY1,
    Objective.NAIVE: LabelPolicy.NAIVE_DROP,
    Objective.SHIFT: LabelPolicy.SHIFT,
}


class DelayHead:
    """
    延迟塔输出形式.
    """

    SOFTMAX = "softmax"  # T+2 个日槽上的 softmax
    RATE = "rate"  # 单个 softplus 速率 λ（DFM）


class ScoreMode:
    """
    评估打分口径.
    """

    CVR = "cvr"  # 点击样本上的 pCVR = q/p
    CTCVR = "ctcvr"  # 全部曝光上的 pCTCVR = q


class FirstDay:
    """
    ESMM_DAY1 的"第一天"定义.
    """

    ROLLING = "rolling"  # 点击后 24 小时
    CALENDAR = "calendar"  # 与点击同一自然日（UTC）


# 对数项内部的概率截断
PROB_EPS = 1e-7
