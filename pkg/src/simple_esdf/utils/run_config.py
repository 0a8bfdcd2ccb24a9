"""把合并后的 DictConfig 转成各模块的强类型配置."""

from dataclasses import dataclass
from typing import Any, Dict

from omegaconf import DictConfig, OmegaConf

from simple_esdf.constants.constants import OBJECTIVE_POLICY, FirstDay, LabelPolicy, Objective, ScoreMode
from simple_esdf.events.slots import SlotConfig
from simple_esdf.synthgen.generator import GenConfig
from simple_esdf.trainer.loop import TrainConfig
from simple_esdf.utils.config_manager import ConfigManager
from simple_esdf.utils.errors import ConfigError


@dataclass
class RunConfig:
    config: DictConfig

    @classmethod
    def from_manager(cls, manager: ConfigManager | None = None) -> "RunConfig":
        manager = manager or ConfigManager.get_instance()
        return cls(manager.config)

    @property
    def seed(self) -> int:
        return int(self.config.SEED)

    @property
    def slot(self) -> SlotConfig:
        s = self.config.SLOT
        return SlotConfig(max_delay_days=int(s.MAX_DELAY_DAYS), seconds_per_slot=int(s.SECONDS_PER_SLOT))

    def gen_config(self) -> GenConfig:
        g = self.config.GENERATOR
        return GenConfig.build(
            n_impressions=int(g.N_IMPRESSIONS),
            feature_dim=int(g.FEATURE_DIM),
            n_fields=int(g.N_FIELDS),
            seed=self.seed,
            slot=self.slot,
            weight_scale=float(g.WEIGHT_SCALE),
            delay_weight_scale=float(g.DELAY_WEIGHT_SCALE),
            hump_height=float(g.DELAY_HUMP_HEIGHT),
            ctr_bias=float(g.CTR_BIAS),
            cvr_bias=float(g.CVR_BIAS),
            day1_mass_target=float(g.DAY1_MASS_TARGET),
            zipf_exponent=float(g.ZIPF_EXPONENT),
            mean_request_size=float(g.MEAN_REQUEST_SIZE),
            start_ts=int(g.START_TS),
            n_days=int(g.N_DAYS),
            overflow_extra_days=int(g.OVERFLOW_EXTRA_DAYS),
            block_size=int(g.BLOCK_SIZE),
        )

    @property
    def n_workers(self) -> int:
        return int(self.config.GENERATOR.N_WORKERS)

    @property
    def start_ts(self) -> int:
        return int(self.config.GENERATOR.START_TS)

    @property
    def objective(self) -> Objective:
        try:
            return Objective(self.config.TRAIN.OBJECTIVE)
        except ValueError:
            raise ConfigError(f"未知的训练目标: {self.config.TRAIN.OBJECTIVE}") from None

    def train_config(self) -> TrainConfig:
        t = self.config.TRAIN
        m = self.config.MODEL
        return TrainConfig(
            objective=self.objective,
            learning_rate=float(t.LEARNING_RATE),
            batch_size=int(t.BATCH_SIZE),
            epochs=int(t.EPOCHS),
            seed=self.seed,
            em_steps_per_estep=int(t.EM_STEPS_PER_ESTEP),
            tower_hidden=tuple(int(h) for h in m.TOWER_HIDDEN),
            emb_dim=int(m.EMB_DIM),
            full_batch_estep=bool(t.FULL_BATCH_ESTEP),
            gradient_check=bool(t.GRADIENT_CHECK),
        )

    @property
    def daily_resnapshot(self) -> bool:
        return bool(self.config.TRAIN.DAILY_RESNAPSHOT)

    def policy(self, objective: Objective | None = None) -> LabelPolicy:
        """
        训练时由目标决定快照策略，显式配置的 ATTRIBUTION.POLICY 必须与之一致；
        独立的 snapshot 命令缺省为 full_censored.
        """
        value = self.config.ATTRIBUTION.POLICY
        configured = None
        if value is not None:
            try:
                configured = LabelPolicy(value)
            except ValueError:
                raise ConfigError(f"未知的标签策略: {value}") from None
        if objective is None:
            return configured or LabelPolicy.FULL_CENSORED
        expected = OBJECTIVE_POLICY[Objective(objective)]
        if configured is not None and configured != expected:
            raise ConfigError(
                f"训练目标 {Objective(objective).value} 需要 {expected.value} 快照，"
                f"但 ATTRIBUTION.POLICY={configured.value}"
            )
        return expected

    @property
    def window_days(self) -> int:
        return int(self.config.ATTRIBUTION.WINDOW_DAYS)

    @property
    def first_day(self) -> str:
        value = str(self.config.ATTRIBUTION.FIRST_DAY)
        if value not in (FirstDay.ROLLING, FirstDay.CALENDAR):
            raise ConfigError(f"ATTRIBUTION.FIRST_DAY 只能是 rolling 或 calendar: {value}")
        return value

    @property
    def train_days(self) -> int:
        return int(self.config.ATTRIBUTION.TRAIN_DAYS)

    @property
    def test_days(self) -> int:
        return int(self.config.ATTRIBUTION.TEST_DAYS)

    @property
    def score_mode(self) -> str:
        value = str(self.config.EVAL.SCORE)
        if value not in (ScoreMode.CVR, ScoreMode.CTCVR):
            raise ConfigError(f"EVAL.SCORE 只能是 cvr 或 ctcvr: {value}")
        return value

    @property
    def min_gauc_groups(self) -> int:
        return int(self.config.EVAL.MIN_GAUC_GROUPS)

    @property
    def log_dir(self) -> str | None:
        return self.config.PATHS.LOG_DIR

    def to_header(self) -> Dict[str, Any]:
        """
        完全解析后的配置，写入每个产出文件的 #config 行；线程数与日志目录不影响产出，不写入.
        """
        header = OmegaConf.to_container(self.config, resolve=True)
        header["GENERATOR"].pop("N_WORKERS", None)
        header.pop("PATHS", None)
        return header
