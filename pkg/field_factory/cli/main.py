"""
命令行入口：扫描命令模块，按选项定义生成子命令
"""
import argparse
import logging
import sys
import uuid
from typing import Any, Dict, List, Optional

from .. import __version__
from ..core.command_manager import CommandManager
from ..core.errors import VALIDATION_CODES
from ..core.interfaces import ExecutionContext, Module, ResultStatus, Widget, WidgetType

logger = logging.getLogger("field_factory")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2

_TYPES = {
    WidgetType.STRING: str,
    WidgetType.PATH: str,
    WidgetType.INTEGER: int,
    WidgetType.FLOAT: float,
}


class _Parser(argparse.ArgumentParser):
    """参数解析失败时按校验错误退出"""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: 错误: {message}\n")


def _add_widget(parser: argparse.ArgumentParser, widget: Widget) -> None:
    kwargs: Dict[str, Any] = {"dest": widget.name, "help": widget.label, "default": widget.default_value}
    if widget.widget_type == WidgetType.FLAG:
        kwargs["action"] = "store_true"
        kwargs["default"] = bool(widget.default_value)
    elif widget.widget_type == WidgetType.CHOICE:
        kwargs["choices"] = [opt.value for opt in widget.options if not opt.disabled]
    else:
        kwargs["type"] = _TYPES[widget.widget_type]
    parser.add_argument(widget.cli_flag, **kwargs)


def build_parser(modules: List[Module]) -> argparse.ArgumentParser:
    parser = _Parser(prog="field-factory", description="鬼成像光场优化实验工具")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="日志级别")
    subparsers = parser.add_subparsers(dest="command", metavar="命令", parser_class=_Parser)
    subparsers.required = True
    for module in sorted(modules, key=lambda m: m.module_name):
        sub = subparsers.add_parser(module.module_name, help=module.description,
                                    description=module.description, epilog=module.help_msg or None)
        for widget in module.widgets:
            _add_widget(sub, widget)
    return parser


def setup_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s [%(name)s] %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[List[str]] = None) -> int:
    manager = CommandManager()
    modules = manager.scan_commands()
    parser = build_parser(modules)
    args = parser.parse_args(argv)
    setup_logging(args.log_level)

    data = {key: value for key, value in vars(args).items() if key not in ("command", "log_level")}
    context = ExecutionContext(run_id=uuid.uuid4().hex[:8])
    logger.debug("执行 %s (run_id=%s): %s", args.command, context.run_id, data)
    result = manager.execute_module(args.command, data, context)

    if result.status == ResultStatus.ERROR:
        logger.error("%s 失败 [%s]: %s", args.command, result.error_code, result.message)
        return EXIT_VALIDATION if result.error_code in VALIDATION_CODES else EXIT_RUNTIME
    if result.status == ResultStatus.WARNING:
        logger.warning("%s 结果可能不完整", args.command)
    print(result.message)
    logger.info("%s 完成，耗时 %.2fs", args.command, result.execution_time or 0.0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
