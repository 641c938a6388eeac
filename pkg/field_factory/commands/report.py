"""
report：汇总已有结果
"""
from typing import Any, Dict, Optional

from ..core.interfaces import ExecutionContext, Handler, Module, Register, Result, ResultStatus
from ..harness.tables import summarize
from ._common import common_widgets, resolve_config


class ReportRegister(Register):
    """report 命令注册"""

    def register(self) -> Module:
        return Module(
            handler_class=ReportHandler,
            group_name="实验",
            module_name="report",
            description="读取 results.csv，计算优化光场相对高斯光场的增益与临界采样率",
            widgets=common_widgets(),
        )


class ReportHandler(Handler):
    """report 处理器"""

    def handle(self, data: Dict[str, Any], context: Optional[ExecutionContext] = None) -> Result:
        cfg = resolve_config(data, context)
        summary = summarize(cfg.out_dir)
        status = ResultStatus.SUCCESS if summary.complete else ResultStatus.WARNING
        lines = [f"SR={sr:.4f} M={m}: ΔPSNR={d_psnr:+.2f} dB, ΔSSIM={d_ssim:+.4f}"
                 for sr, m, d_psnr, d_ssim in summary.gains]
        lines += [f"{method} 临界采样率: {value}" for method, value in sorted(summary.critical_sr.items())]
        return Result(
            status=status,
            data={"gains": summary.gains, "critical_sr": summary.critical_sr},
            message="\n".join(lines) or "没有可对比的结果",
        )
