"""
build-fields：由字典生成优化光场与高斯基线光场
"""
from typing import Any, Dict, Optional

from ..core.interfaces import ExecutionContext, Handler, Module, Register, Result, ResultStatus
from ..harness.experiment import build_fields, load_dictionary, save_fields
from ._common import common_widgets, resolve_config


class BuildFieldsRegister(Register):
    """build-fields 命令注册"""

    def register(self) -> Module:
        return Module(
            handler_class=BuildFieldsHandler,
            group_name="光场",
            module_name="build-fields",
            description="特征分解 ΨΨᵀ，写出最大行数的优化采样矩阵和高斯采样矩阵（抬升前后各一份）",
            widgets=common_widgets(),
        )


class BuildFieldsHandler(Handler):
    """build-fields 处理器"""

    def handle(self, data: Dict[str, Any], context: Optional[ExecutionContext] = None) -> Result:
        cfg = resolve_config(data, context)
        dictionary = load_dictionary(cfg)
        state, fields = build_fields(cfg, dictionary)
        paths = save_fields(cfg, dictionary, state, fields)
        return Result(
            status=ResultStatus.SUCCESS,
            data={"rank": state.rank, "lift_constant": state.lift_constant,
                  "files": [str(p) for p in paths]},
            message=f"已写出 {len(paths)} 个矩阵文件",
        )
