"""
命令管理器
"""
import importlib
import logging
import pkgutil
import time
import traceback
from typing import Dict, List, Optional, Any

from .errors import ArgumentError, FieldFactoryError
from .interfaces import Register, Module, Result, ResultStatus, ExecutionContext, Widget

logger = logging.getLogger(__name__)


class CommandManager:
    """命令管理器"""

    def __init__(self, commands_package: str = "field_factory.commands"):
        self.commands_package = commands_package
        self.modules: Dict[str, Module] = {}  # module_name -> Module

    def scan_commands(self) -> List[Module]:
        """扫描并加载所有命令"""
        package = importlib.import_module(self.commands_package)
        modules = []

        for entry in pkgutil.iter_modules(package.__path__):
            if entry.name.startswith("_"):
                continue
            try:
                loaded = self._load_command(f"{self.commands_package}.{entry.name}")
                if loaded:
                    modules.extend(loaded)
            except Exception as e:
                logger.error("加载命令失败 %s: %s", entry.name, e)

        return modules

    def _load_command(self, import_path: str) -> Optional[List[Module]]:
        """加载单个命令模块"""
        command_module = importlib.import_module(import_path)

        # 查找实现Register接口的类
        modules = []

        for attr_name in dir(command_module):
            attr = getattr(command_module, attr_name)
            if (isinstance(attr, type) and
                    issubclass(attr, Register) and
                    attr is not Register and
                    attr.__module__ == command_module.__name__):

                module = attr().register()
                self.modules[module.module_name] = module
                modules.append(module)

        return modules if modules else None

    def get_module(self, module_id: str) -> Optional[Module]:
        """获取命令信息"""
        return self.modules.get(module_id)

    def list_modules(self) -> List[Dict[str, Any]]:
        """列出所有命令"""
        result = []
        for module_id, module in sorted(self.modules.items()):
            result.append({
                "id": module_id,
                "group_name": module.group_name,
                "module_name": module.module_name,
                "description": module.description,
                "author": module.author,
                "version": module.version,
                "widgets": [self._widget_to_dict(w) for w in module.widgets]
            })
        return result

    def _widget_to_dict(self, widget: Widget) -> Dict[str, Any]:
        """将Widget对象转换为字典"""
        return {
            "name": widget.name,
            "label": widget.label,
            "widget_type": widget.widget_type.value,
            "flag": widget.cli_flag,
            "default_value": widget.default_value,
            "options": [
                {
                    "display_name": opt.display_name,
                    "value": opt.value,
                    "disabled": opt.disabled
                } for opt in widget.options
            ],
            "validation": {
                "required": widget.validation.required,
                "min_value": widget.validation.min_value,
                "max_value": widget.validation.max_value
            }
        }

    def _validate(self, module: Module, data: Dict[str, Any]) -> None:
        """按选项的验证规则检查输入"""
        for widget in module.widgets:
            value = data.get(widget.name)
            rule = widget.validation
            if value is None:
                if rule.required:
                    raise ArgumentError(f"缺少必填参数: {widget.cli_flag}")
                continue
            if rule.min_value is not None and value < rule.min_value:
                raise ArgumentError(f"{widget.cli_flag} 不能小于 {rule.min_value}")
            if rule.max_value is not None and value > rule.max_value:
                raise ArgumentError(f"{widget.cli_flag} 不能大于 {rule.max_value}")

    def execute_module(self, module_id: str, data: Dict[str, Any],
                       context: Optional[ExecutionContext] = None) -> Result:
        """执行命令"""
        module = self.get_module(module_id)
        if not module:
            return Result(
                status=ResultStatus.ERROR,
                message=f"命令不存在: {module_id}",
                error_code="MODULE_NOT_FOUND"
            )

        start_time = time.perf_counter()
        try:
            self._validate(module, data)
            handler = module.handler_class()
            result = handler.handle(data, context)
        except FieldFactoryError as e:
            logger.debug(traceback.format_exc())
            result = Result(
                status=ResultStatus.ERROR,
                message=e.message,
                error_code=e.error_code
            )
        except Exception as e:
            logger.error("执行失败: %s\n%s", e, traceback.format_exc())
            result = Result(
                status=ResultStatus.ERROR,
                message=f"执行失败: {e}",
                error_code="EXECUTION_ERROR"
            )

        result.execution_time = time.perf_counter() - start_time
        return result
