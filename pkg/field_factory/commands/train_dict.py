"""
train-dict：训练受约束字典并保存
"""
from typing import Any, Dict, Optional

from ..core.config import DictionaryKind
from ..core.interfaces import (ExecutionContext, Handler, Module, Register, Result, ResultStatus,
                               SelectOption, Widget, WidgetType)
from ..harness.experiment import run_training
from ._common import common_widgets, resolve_config, workers_for


class TrainDictRegister(Register):
    """train-dict 命令注册"""

    def register(self) -> Module:
        return Module(
            handler_class=TrainDictHandler,
            group_name="字典",
            module_name="train-dict",
            description="在训练图像上学习首列为常数、其余列零均值单位范数的字典",
            widgets=common_widgets() + [
                Widget(name="kind", label="字典类型（覆盖配置）", widget_type=WidgetType.CHOICE,
                       options=[SelectOption("K-SVD", "ksvd"), SelectOption("DCT", "dct")]),
            ],
            help_msg="结果写入 [dictionary] path，默认 <out>/dictionary.gimat",
        )


class TrainDictHandler(Handler):
    """train-dict 处理器"""

    def handle(self, data: Dict[str, Any], context: Optional[ExecutionContext] = None) -> Result:
        cfg = resolve_config(data, context)
        if data.get("kind"):
            cfg.dictionary.kind = DictionaryKind(data["kind"])
        dictionary, report = run_training(cfg, workers_for(cfg))
        summary = {
            "path": str(cfg.dictionary_path),
            "n_pixels": dictionary.n_pixels,
            "n_atoms": dictionary.n_atoms,
            "sparsity": dictionary.sparsity,
            "checksum": dictionary.checksum,
        }
        if report is not None:
            summary["objectives"] = report.objectives
            summary["rms_error"] = report.rms_error
        return Result(status=ResultStatus.SUCCESS, data=summary,
                      message=f"字典已保存到 {cfg.dictionary_path}")
