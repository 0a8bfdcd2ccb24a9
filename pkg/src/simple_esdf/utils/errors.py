"""
统一异常定义，命令行按类型映射退出码.
"""

from typing import Any, Dict


class EsdfError(Exception):
    """
    所有工具箱异常的基类.
    """


class InputError(EsdfError, ValueError):
    """
    输入被拒绝：负延迟、越界特征下标或日槽等.
    """


class ConfigError(EsdfError, ValueError):
    """
    配置错误：维度不匹配、超参非法、目标与标签策略不兼容.
    """


class DataError(EsdfError):
    """
    数据文件错误：格式损坏、魔数/版本不符、日槽配置不一致.
    """


class InvariantError(EsdfError, ValueError):
    """
    样本标志位违反不变量（如 z=1 但 y=0）.
    """


class UndefinedMetricError(EsdfError, ValueError):
    """
    指标无定义：单类别 AUC、无有效分组、基线 AUC <= 0.5、空直方图.
    """


class NumericalError(EsdfError, ArithmeticError):
    """
    数值错误，附带定位上下文（项名、样本下标、epoch、batch）.
    """

    def __init__(self, message: str, context: Dict[str, Any] | None = None):
        self.context: Dict[str, Any] = dict(context or {})
        super().__init__(message)

    def with_context(self, **extra: Any) -> "NumericalError":
        self.context.update(extra)
        return self

    def __str__(self) -> str:
        base = super().__str__()
        if not self.context:
            return base
        details = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{base} ({details})"
