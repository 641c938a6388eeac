"""
命令发现、执行与命令行入口测试
"""
import pytest

from field_factory.cli.main import EXIT_VALIDATION, build_parser, main
from field_factory.core.command_manager import CommandManager
from field_factory.core.errors import ArgumentError, FieldFactoryError
from field_factory.core.interfaces import (Handler, Module, Register, Result, ResultStatus, ValidationRule,
                                           Widget, WidgetType)


@pytest.fixture
def manager():
    manager = CommandManager()
    manager.scan_commands()
    return manager


def test_scan_finds_all_commands(manager):
    names = [item["id"] for item in manager.list_modules()]
    assert names == ["build-fields", "report", "run", "train-dict"]
    flags = {w["flag"] for w in manager.list_modules()[0]["widgets"]}
    assert {"--config", "--seed", "--out", "--limit"} <= flags


def test_get_module(manager):
    assert manager.get_module("run").module_name == "run"
    assert manager.get_module("nope") is None


def test_unknown_module(manager):
    result = manager.execute_module("nope", {})
    assert result.status == ResultStatus.ERROR
    assert result.error_code == "MODULE_NOT_FOUND"


class _FailingHandler(Handler):
    def handle(self, data, context=None):
        if data.get("mode") == "domain":
            raise ArgumentError("bad")
        raise RuntimeError("boom")


class _FailingRegister(Register):
    def register(self):
        return Module(handler_class=_FailingHandler, module_name="fail", widgets=[
            Widget(name="count", label="数量", widget_type=WidgetType.INTEGER,
                   validation=ValidationRule(min_value=1)),
        ])


def test_errors_become_results():
    manager = CommandManager()
    module = _FailingRegister().register()
    manager.modules[module.module_name] = module

    result = manager.execute_module("fail", {"mode": "domain"})
    assert result.error_code == "ARGUMENT_ERROR"
    assert result.execution_time is not None

    result = manager.execute_module("fail", {"mode": "other"})
    assert result.error_code == "EXECUTION_ERROR"

    result = manager.execute_module("fail", {"count": 0})
    assert result.error_code == "ARGUMENT_ERROR"


def test_error_code_override():
    assert FieldFactoryError("x", "CUSTOM").error_code == "CUSTOM"
    assert not Result(status=ResultStatus.ERROR).ok


def test_parser_from_widgets(manager):
    parser = build_parser(list(manager.modules.values()))
    args = parser.parse_args(["train-dict", "--seed", "4", "--kind", "dct"])
    assert args.seed == 4 and args.kind == "dct"


def test_bad_arguments_exit_with_validation_code():
    with pytest.raises(SystemExit) as info:
        main(["run", "--seed", "abc"])
    assert info.value.code == EXIT_VALIDATION


def test_report_on_empty_directory(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == EXIT_VALIDATION


def test_run_without_dictionary(config_file):
    assert main(["run", "--config", str(config_file())]) == EXIT_VALIDATION


def test_missing_config(tmp_path):
    assert main(["train-dict", "--config", str(tmp_path / "missing.ini")]) == EXIT_VALIDATION
