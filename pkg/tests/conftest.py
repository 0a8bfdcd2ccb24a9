import pytest

from simple_esdf.events import SlotConfig
from simple_esdf.synthgen import GenConfig, generate
from simple_esdf.utils.config_manager import ConfigManager


@pytest.fixture(autouse=True)
def _fresh_config():
    ConfigManager.reset_instance()
    yield
    ConfigManager.reset_instance()


@pytest.fixture
def slot() -> SlotConfig:
    return SlotConfig()


@pytest.fixture(scope="session")
def small_gen() -> GenConfig:
    return GenConfig.build(n_impressions=6000, feature_dim=120, n_fields=4, seed=11, block_size=1000)


@pytest.fixture(scope="session")
def small_data(small_gen):
    return generate(small_gen)


@pytest.fixture(scope="session")
def oracle_data():
    """
    E 步与真值后验对照用的 10^4 条日志.
    """
    cfg = GenConfig.build(n_impressions=10000, feature_dim=120, n_fields=4, seed=13, block_size=2500)
    return cfg, generate(cfg)
