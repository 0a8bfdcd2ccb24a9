# 系统常量定义
from enum import IntEnum


class ExitCode(IntEnum):
    """
    命令行退出码.
    """

    OK = 0
    USAGE = 2
    DATA = 3
    NUMERICAL = 4


class SystemConstants:
    """
    系统常量.
    """

    # 应用信息
    APP_NAME = "simple-esdf"
    APP_VERSION = "0.1.0"

    # 文件魔数行（首行），格式版本号紧随其后
    EVENT_LOG_MAGIC = "ESDF-EVENTLOG"
    TRUTH_MAGIC = "ESDF-TRUTH"
    SNAPSHOT_MAGIC = "ESDF-SNAPSHOT"
    CHECKPOINT_MAGIC = "ESDF-CKPT"
    HISTORY_MAGIC = "ESDF-HISTORY"
    REPORT_MAGIC = "ESDF-REPORT"
    TABLE_MAGIC = "ESDF-TABLE"
    FORMAT_VERSION = 1

    # 文件名常量
    EVENT_LOG_FILE = "events.tsv"
    TRUTH_FILE = "truth.tsv"
    CHECKPOINT_FILE = "model.ckpt"
    HISTORY_FILE = "history.tsv"
    REPORT_FILE = "report.tsv"
