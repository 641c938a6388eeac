"""
run：完整的 (方法, 采样率) 扫描
"""
from typing import Any, Dict, Optional

from ..core.interfaces import ExecutionContext, Handler, Module, Register, Result, ResultStatus
from ..harness.experiment import run_experiment
from ._common import common_widgets, resolve_config, workers_for


class RunRegister(Register):
    """run 命令注册"""

    def register(self) -> Module:
        return Module(
            handler_class=RunHandler,
            group_name="实验",
            module_name="run",
            description="对每个方法和采样率测量、重建并评估测试图像，写出 results.csv 等结果文件",
            widgets=common_widgets(),
            help_msg="需要先运行 train-dict；成功结束时在输出目录写入 _DONE",
        )


class RunHandler(Handler):
    """run 处理器"""

    def handle(self, data: Dict[str, Any], context: Optional[ExecutionContext] = None) -> Result:
        cfg = resolve_config(data, context)
        records = run_experiment(cfg, workers=workers_for(cfg))
        return Result(
            status=ResultStatus.SUCCESS,
            data={"records": len(records), "out_dir": str(cfg.out_dir)},
            message=f"完成 {len(records)} 个实验单元，结果在 {cfg.out_dir}",
        )
