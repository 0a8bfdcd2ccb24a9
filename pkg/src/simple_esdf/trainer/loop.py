"""训练循环.

ESDF 采用广义 EM：每个 minibatch 先以当前参数前向算 E 步权重并冻结，
再做 em_steps_per_estep 次 Adam 梯度步（M 步）。其余目标没有 E 步。
"""

import time
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from simple_esdf.attribution.replay import Snapshot
from simple_esdf.constants.constants import OBJECTIVE_POLICY, DelayHead, LabelPolicy, Objective
from simple_esdf.events.slots import SlotConfig
from simple_esdf.metrics.loss import log_loss
from simple_esdf.metrics.ranking import auc
from simple_esdf.metrics.report import predict
from simple_esdf.model.batch import Batch
from simple_esdf.model.network import ModelParams, ModelSpec, check_gradient, gradient, init_params
from simple_esdf.objectives import (
    DfmObjective,
    EsdfObjective,
    EsmmObjective,
    EStepWeights,
    LossBreakdown,
    e_step_batch,
)
from simple_esdf.trainer.history import EpochEntry, TrainHistory
from simple_esdf.trainer.optimizer import AdamState, adam_step
from simple_esdf.utils.errors import ConfigError, NumericalError, UndefinedMetricError
from simple_esdf.utils.logging_config import get_logger

logger = get_logger(__name__)

CHECK_BATCH_SIZE = 256


@dataclass
class TrainConfig:
    objective: Objective = Objective.ESDF
    learning_rate: float = 1e-4
    batch_size: int = 1024
    epochs: int = 5
    seed: int = 7
    em_steps_per_estep: int = 1
    tower_hidden: Tuple[int, ...] = (64, 32)
    emb_dim: int = 8
    full_batch_estep: bool = False
    gradient_check: bool = False

    def __post_init__(self):
        try:
            self.objective = Objective(self.objective)
        except ValueError:
            raise ConfigError(f"未知的训练目标: {self.objective}") from None
        self.tower_hidden = tuple(int(h) for h in self.tower_hidden)
        if self.learning_rate <= 0 or self.batch_size < 1 or self.em_steps_per_estep < 1:
            raise ConfigError(
                f"超参必须为正: lr={self.learning_rate}, batch_size={self.batch_size}, "
                f"em_steps={self.em_steps_per_estep}"
            )
        if self.epochs < 0:
            raise ConfigError(f"epochs 不能为负: {self.epochs}")

    @property
    def policy(self) -> LabelPolicy:
        return OBJECTIVE_POLICY[self.objective]

    @property
    def delay_head(self) -> str:
        return DelayHead.RATE if self.objective == Objective.DFM else DelayHead.SOFTMAX

    def model_spec(self, feature_dim: int, n_fields: int, slot: SlotConfig) -> ModelSpec:
        return ModelSpec(
            feature_dim=feature_dim,
            n_fields=n_fields,
            num_bins=slot.num_bins,
            emb_dim=self.emb_dim,
            tower_hidden=self.tower_hidden,
            delay_head=self.delay_head,
        )

    def to_dict(self) -> Dict[str, object]:
        return {
            "objective": self.objective.value,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "em_steps_per_estep": self.em_steps_per_estep,
            "tower_hidden": list(self.tower_hidden),
            "emb_dim": self.emb_dim,
            "full_batch_estep": self.full_batch_estep,
            "gradient_check": self.gradient_check,
        }


def build_objective(objective: Objective):
    if objective == Objective.ESDF:
        return EsdfObjective()
    if objective == Objective.DFM:
        return DfmObjective()
    return EsmmObjective()


def check_policy(config: TrainConfig, snap: Snapshot) -> None:
    if LabelPolicy(snap.policy) != config.policy:
        raise ConfigError(
            f"目标 {config.objective.value} 需要 {config.policy.value} 快照，实际为 {LabelPolicy(snap.policy).value}"
        )


class Trainer:
    """
    持有参数、Adam 状态与随机数流，逐 epoch 推进.
    """

    def __init__(self, config: TrainConfig, spec: ModelSpec, slot: SlotConfig, params: ModelParams | None = None):
        self.config = config
        self.slot = slot
        self.params = params if params is not None else init_params(spec, config.seed)
        self.moments = AdamState.zeros(self.params.arrays)
        self.step = 0
        self.history = TrainHistory()
        # 打乱顺序的随机流与参数初始化分开
        self._rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1,)))
        self._objective = build_objective(config.objective)

    def _frozen_objective(self, batch: Batch, weights: EStepWeights | None = None):
        if self.config.objective != Objective.ESDF:
            return self._objective
        if weights is None:
            heads = predict(self.params, batch)
            weights = e_step_batch(heads, batch)
        return EsdfObjective(weights)

    def gradient_check(self, check_batch: Batch, when: str) -> None:
        report = check_gradient(self.params, check_batch, self._frozen_objective(check_batch), seed=self.config.seed)
        if not report.passed:
            raise NumericalError(
                "梯度校验未通过",
                {"when": when, "failures": len(report.failures), "max_rel_err": report.max_rel_err},
            )
        logger.info("[Trainer] 梯度校验通过 (%s)，最大相对误差 %.2e", when, report.max_rel_err)

    def run_epoch(self, data: Batch, eval_batch: Batch | None = None) -> EpochEntry:
        cfg = self.config
        epoch = len(self.history) + 1
        started = time.perf_counter()
        n = len(data)

        full_weights = None
        if cfg.objective == Objective.ESDF and cfg.full_batch_estep and n:
            full_weights = e_step_batch(predict(self.params, data), data)

        total = LossBreakdown.from_terms()
        weight_sum = 0.0
        weight_count = 0
        order = self._rng.permutation(n)
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            rows = order[start : start + cfg.batch_size]
            mb = data.take(rows)
            weights = None if full_weights is None else EStepWeights(full_weights.w[rows])
            objective = self._frozen_objective(mb, weights)
            if isinstance(objective, EsdfObjective):
                i01 = (mb.y == 1) & (mb.z == 0)
                weight_sum += float(objective.weights.w[i01].sum())
                weight_count += int(i01.sum())
            repeats = cfg.em_steps_per_estep if cfg.objective == Objective.ESDF else 1
            for k in range(repeats):
                try:
                    grads, result = gradient(self.params, mb, objective)
                    self.step += 1
                    adam_step(self.params.arrays, grads, self.moments, self.step, cfg.learning_rate)
                except NumericalError as e:
                    raise e.with_context(epoch=epoch, batch=b) from None
                if k == 0:
                    total = total + result.breakdown

        entry = EpochEntry(
            epoch=epoch,
            n_samples=n,
            loss=total,
            mean_weight=weight_sum / weight_count if weight_count else None,
            wall_clock=time.perf_counter() - started,
        )
        if eval_batch is not None and len(eval_batch):
            entry.eval_auc, entry.eval_log_loss = evaluate_batch(self.params, eval_batch)
        self.history.append(entry)
        logger.info(
            "[Trainer] %s epoch %d: loss=%.4f (click=%.4f conv=%.4f delay_obs=%.4f delay_cens=%.4f) "
            "eval_auc=%s 用时 %.1fs",
            cfg.objective.value,
            epoch,
            total.total,
            total.terms["click"],
            total.terms["conversion"],
            total.terms["delay_observed"],
            total.terms["delay_censored"],
            "n/a" if entry.eval_auc is None else f"{entry.eval_auc:.4f}",
            entry.wall_clock,
        )
        return entry


def evaluate_batch(params: ModelParams, batch: Batch) -> Tuple[float | None, float | None]:
    """
    点击样本上 pCVR 的 AUC 与全部样本 pCTCVR 的 log loss.
    """
    heads = predict(params, batch)
    clicked = batch.y == 1
    try:
        value = auc(heads.r[clicked], batch.z[clicked])
    except UndefinedMetricError:
        value = None
    return value, log_loss(heads.q, batch.y * batch.z)


def _batch_of(snap: Snapshot | None, slot: SlotConfig, n_fields: int) -> Batch | None:
    if snap is None:
        return None
    return Batch.from_samples(snap.samples, slot, n_fields, observe_ts=snap.observe_ts)


def train(
    config: TrainConfig,
    train_snapshot: Snapshot,
    eval_set: Snapshot | None,
    feature_dim: int,
    n_fields: int,
    slot: SlotConfig,
) -> Tuple[ModelParams, TrainHistory]:
    """
    在单个快照上训练 config.epochs 个 epoch；eval_set 为真值标签的测试快照.
    """
    check_policy(config, train_snapshot)
    spec = config.model_spec(feature_dim, n_fields, slot)
    trainer = Trainer(config, spec, slot)
    data = _batch_of(train_snapshot, slot, n_fields)
    eval_batch = _batch_of(eval_set, slot, n_fields)
    if len(data) == 0:
        logger.warning("[Trainer] 训练快照为空，返回初始化参数")
        return trainer.params, trainer.history

    check_batch = data.take(np.arange(min(CHECK_BATCH_SIZE, len(data))))
    if config.gradient_check:
        trainer.gradient_check(check_batch, "init")
    for epoch in range(1, config.epochs + 1):
        trainer.run_epoch(data, eval_batch)
        if config.gradient_check and epoch == 1:
            trainer.gradient_check(check_batch, "epoch 1")
    return trainer.params, trainer.history


def train_daily(
    config: TrainConfig,
    snapshots: Sequence[Snapshot],
    eval_set: Snapshot | None,
    feature_dim: int,
    n_fields: int,
    slot: SlotConfig,
) -> Tuple[ModelParams, TrainHistory]:
    """逐日重新成熟的训练.

    第 k 天的快照（截至第 k 天结束观测的全部曝光）训练一个 epoch，参数与 Adam 状态跨天延续，
    历史中每天一条记录。
    """
    if not snapshots:
        raise ConfigError("逐日训练至少需要一个快照")
    for snap in snapshots:
        check_policy(config, snap)
    spec = config.model_spec(feature_dim, n_fields, slot)
    trainer = Trainer(config, spec, slot)
    eval_batch = _batch_of(eval_set, slot, n_fields)
    for day, snap in enumerate(snapshots, start=1):
        data = _batch_of(snap, slot, n_fields)
        if len(data) == 0:
            logger.warning("[Trainer] 第 %d 天快照为空，跳过", day)
            continue
        trainer.run_epoch(data, eval_batch)
    return trainer.params, trainer.history
