from pathlib import Path
from typing import Any, Dict, Iterable, List

from omegaconf import DictConfig, OmegaConf
from omegaconf.errors import OmegaConfBaseException

from simple_esdf.utils.errors import ConfigError
from simple_esdf.utils.logging_config import get_logger

logger = get_logger(__name__)


class ConfigManager:
    """配置管理器 - 单例模式

    三层合并：默认值 < 配置文件（扁平 SECTION.KEY=value）< 命令行覆盖。
    """

    _instance = None

    # 默认配置
    DEFAULT_CONFIG = {
        "SEED": 7,
        "SLOT": {
            "MAX_DELAY_DAYS": 6,  # T，槽 0..T 为整天，T+1 为溢出槽
            "SECONDS_PER_SLOT": 86400,
        },
        "GENERATOR": {
            "N_IMPRESSIONS": 100000,
            "FEATURE_DIM": 2000,
            "N_FIELDS": 8,
            "CTR_BIAS": -1.2,
            "CVR_BIAS": -0.8,
            "WEIGHT_SCALE": 0.8,
            "DELAY_WEIGHT_SCALE": 1.0,
            "DELAY_HUMP_HEIGHT": 3.0,
            "DAY1_MASS_TARGET": 0.8,
            "ZIPF_EXPONENT": 1.2,
            "MEAN_REQUEST_SIZE": 10,
            "START_TS": 1590796800,  # 2020-05-30 00:00:00 UTC
            "N_DAYS": 8,
            "OVERFLOW_EXTRA_DAYS": 7,
            "BLOCK_SIZE": 4096,
            "N_WORKERS": 1,
        },
        "ATTRIBUTION": {
            "POLICY": None,  # 缺省由训练目标决定；snapshot 命令缺省 full_censored
            "WINDOW_DAYS": 7,
            "FIRST_DAY": "rolling",  # 可选值: rolling, calendar
            "TRAIN_DAYS": 7,
            "TEST_DAYS": 1,
        },
        "MODEL": {
            "EMB_DIM": 8,
            "TOWER_HIDDEN": [64, 32],  # 生产规模: [512, 256, 128]
        },
        "TRAIN": {
            "OBJECTIVE": "esdf",  # 可选值: esdf, esmm, naive, shift, dfm
            "LEARNING_RATE": 1e-4,
            "BATCH_SIZE": 1024,
            "EPOCHS": 5,
            "EM_STEPS_PER_ESTEP": 1,
            "FULL_BATCH_ESTEP": False,
            "DAILY_RESNAPSHOT": False,
            "GRADIENT_CHECK": False,
        },
        "EVAL": {
            "SCORE": "cvr",  # 可选值: cvr, ctcvr
            "MIN_GAUC_GROUPS": 10,
        },
        "PATHS": {
            "LOG_DIR": None,
        },
    }

    def __new__(cls, *args, **kwargs):
        """
        确保单例模式.
        """
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(
        self,
        config_file: Path | None = None,
        overrides: Dict[str, Any] | Iterable[str] | None = None,
    ):
        if self._initialized:
            if config_file is not None:
                self._set_config_file(config_file)
                self._config = self._load_config()
            if overrides is not None:
                self.set_overrides(overrides)
            return
        self._initialized = True
        self._overrides: DictConfig = OmegaConf.create({})
        self.config_file: Path | None = None
        if config_file is not None:
            self._set_config_file(config_file)
        self._config = self._load_config()
        if overrides is not None:
            self.set_overrides(overrides)

    def _set_config_file(self, config_file: Path) -> None:
        path = Path(config_file).expanduser()
        if not path.is_absolute():
            path = (Path.cwd() / path).resolve()
        self.config_file = path
        logger.info(f"Config file: {self.config_file}")

    def _build_default_config(self) -> DictConfig:
        config = OmegaConf.create(self.DEFAULT_CONFIG)
        # 未知键直接报错，防止拼写错误静默失效
        OmegaConf.set_struct(config, True)
        return config

    @staticmethod
    def parse_flat_lines(lines: Iterable[str]) -> List[str]:
        """
        解析扁平 key=value 文本，忽略空行与 # 注释.
        """
        dotlist = []
        for lineno, raw in enumerate(lines, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"配置第 {lineno} 行缺少 '=': {line!r}")
            key, value = line.split("=", 1)
            dotlist.append(f"{key.strip()}={value.strip()}")
        return dotlist

    def _merge(self, base: DictConfig, layer: DictConfig, source: str) -> DictConfig:
        try:
            return OmegaConf.merge(base, layer)
        except OmegaConfBaseException as e:
            raise ConfigError(f"{source} 中存在无效配置项: {e}") from e

    def _load_config(self) -> DictConfig:
        """
        加载配置文件；不存在时使用默认配置.
        """
        config = self._build_default_config()
        if self.config_file is None:
            logger.debug("未指定配置文件，使用默认配置")
            return config
        if not self.config_file.exists():
            raise ConfigError(f"配置文件不存在: {self.config_file}")
        text = self.config_file.read_text(encoding="utf-8").splitlines()
        layer = OmegaConf.from_dotlist(self.parse_flat_lines(text))
        return self._merge(config, layer, str(self.config_file))

    def set_overrides(self, overrides: Dict[str, Any] | Iterable[str] | None) -> None:
        if overrides is None:
            self._overrides = OmegaConf.create({})
        elif isinstance(overrides, dict):
            self._overrides = OmegaConf.create(overrides)
        else:
            self._overrides = OmegaConf.from_dotlist(self.parse_flat_lines(overrides))
        # 提前合并一次以尽早暴露未知键
        self._merge(self._config, self._overrides, "命令行参数")

    @property
    def config(self) -> DictConfig:
        if self._overrides and len(self._overrides) > 0:
            return self._merge(self._config, self._overrides, "命令行参数")
        return self._config

    def with_layer(self, layer: Dict[str, Any], source: str = "附加参数") -> DictConfig:
        """
        在当前配置之上再叠加一层，不修改单例状态.
        """
        return self._merge(self.config, OmegaConf.create(layer), source)

    @classmethod
    def get_instance(
        cls,
        config_file: Path | None = None,
        overrides: Dict[str, Any] | Iterable[str] | None = None,
    ):
        """
        获取配置管理器实例.
        """
        if cls._instance is None:
            cls._instance = cls(config_file=config_file, overrides=overrides)
        else:
            if config_file is not None:
                cls._instance._set_config_file(config_file)
                cls._instance._config = cls._instance._load_config()
            if overrides is not None:
                cls._instance.set_overrides(overrides)
        return cls._instance

    @classmethod
    def reset_instance(cls) -> None:
        """
        丢弃单例（测试与多次命令调用之间使用）.
        """
        cls._instance = None
