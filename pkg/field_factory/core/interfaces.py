"""
核心接口定义
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional, Dict, Any
from enum import Enum


class WidgetType(Enum):
    """命令选项类型枚举"""
    STRING = "string"
    INTEGER = "integer"
    FLOAT = "float"
    PATH = "path"
    CHOICE = "choice"
    FLAG = "flag"


class ResultStatus(Enum):
    """结果状态"""
    SUCCESS = "success"
    ERROR = "error"
    WARNING = "warning"


@dataclass
class SelectOption:
    """选择项配置"""
    display_name: str
    value: str
    disabled: bool = False


@dataclass
class ValidationRule:
    """验证规则"""
    required: bool = False
    min_value: Optional[float] = None
    max_value: Optional[float] = None


@dataclass
class Widget:
    """命令选项定义，命令行参数由此自动生成"""
    name: str                                    # 选项名称(data key)
    label: str                                   # 帮助文本
    widget_type: WidgetType                      # 选项类型
    flag: str = ""                               # 命令行开关，默认 --name
    default_value: Any = None                    # 默认值
    options: List[SelectOption] = field(default_factory=list)  # 选择项
    validation: ValidationRule = field(default_factory=ValidationRule)  # 验证规则

    @property
    def cli_flag(self) -> str:
        return self.flag or "--" + self.name.replace("_", "-")


@dataclass
class Module:
    """命令定义"""
    handler_class: type                          # 处理器类
    group_name: str = ""                         # 命令分组
    module_name: str = ""                        # 命令名称（子命令）
    description: str = ""                        # 命令描述
    widgets: List[Widget] = field(default_factory=list)  # 选项列表
    help_msg: str = ""                           # 帮助信息
    author: str = ""                             # 作者
    version: str = "1.0.0"                       # 版本号


@dataclass
class ExecutionContext:
    """执行上下文"""
    run_id: Optional[str] = None                 # 本次调用的标识，写入日志


@dataclass
class Result:
    """执行结果"""
    status: ResultStatus
    data: Any = None
    message: str = ""
    error_code: Optional[str] = None
    execution_time: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.status != ResultStatus.ERROR


class Register(ABC):
    """注册接口"""

    @abstractmethod
    def register(self) -> Module:
        """注册命令"""
        pass


class Handler(ABC):
    """命令处理器接口"""

    @abstractmethod
    def handle(self, data: Dict[str, Any], context: Optional[ExecutionContext] = None) -> Result:
        """处理业务逻辑"""
        pass
