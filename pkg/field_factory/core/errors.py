"""
异常定义
"""
from typing import Optional


class FieldFactoryError(Exception):
    """所有业务异常的基类"""

    error_code = "FIELD_FACTORY_ERROR"

    def __init__(self, message: str, error_code: Optional[str] = None):
        super().__init__(message)
        self.message = message
        if error_code:
            self.error_code = error_code


class ArgumentError(FieldFactoryError, ValueError):
    """参数错误"""

    error_code = "ARGUMENT_ERROR"


class ConfigValidationError(ArgumentError):
    """配置校验失败，任何计算开始前抛出"""

    error_code = "VALIDATION_ERROR"


class FormatError(FieldFactoryError, ValueError):
    """文件格式错误（魔数不符）"""

    error_code = "FORMAT_ERROR"


class CorruptionError(FieldFactoryError, ValueError):
    """文件内容损坏（长度与头部声明不一致）"""

    error_code = "CORRUPTION_ERROR"


class FieldIOError(FieldFactoryError, OSError):
    """文件读写失败"""

    error_code = "IO_ERROR"


class DegenerateMatrixError(FieldFactoryError, ValueError):
    """矩阵含零列等退化情况"""

    error_code = "DEGENERATE_MATRIX"


class DegenerateInputError(FieldFactoryError, ValueError):
    """训练数据退化（全零）"""

    error_code = "DEGENERATE_INPUT"


class DictionaryConstraintError(FieldFactoryError, ValueError):
    """字典不满足首列常数/其余列零均值/单位范数约束"""

    error_code = "DICTIONARY_CONSTRAINT"


class NumericalError(FieldFactoryError, ArithmeticError):
    """数值计算失败"""

    error_code = "NUMERICAL_ERROR"


class RankError(FieldFactoryError, ValueError):
    """采样行数超过字典秩"""

    error_code = "RANK_ERROR"


class ConsistencyError(FieldFactoryError, ValueError):
    """采样矩阵与状态来源不一致"""

    error_code = "CONSISTENCY_ERROR"


class NegativityError(FieldFactoryError, ValueError):
    """抬升常数不足以保证非负"""

    error_code = "NEGATIVITY_ERROR"


# 这些错误码在命令行中映射为退出码2
VALIDATION_CODES = frozenset({
    ArgumentError.error_code,
    ConfigValidationError.error_code,
})
