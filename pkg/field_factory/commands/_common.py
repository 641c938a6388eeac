"""
各子命令共用的选项与配置解析
"""
import logging
from typing import Any, Dict, List, Optional

from ..core.config import ExperimentConfig, load_config, resolve_threads
from ..core.interfaces import ExecutionContext, ValidationRule, Widget, WidgetType

logger = logging.getLogger(__name__)


def common_widgets() -> List[Widget]:
    """--config/--seed/--out/--limit/--threads"""
    return [
        Widget(name="config", label="配置文件路径", widget_type=WidgetType.PATH),
        Widget(name="seed", label="覆盖主随机种子", widget_type=WidgetType.INTEGER),
        Widget(name="out", label="覆盖输出目录", widget_type=WidgetType.PATH),
        Widget(name="limit", label="每个IDX文件最多读取的图像数", widget_type=WidgetType.INTEGER,
               validation=ValidationRule(min_value=1)),
        Widget(name="threads", label="工作线程数（GI_THREADS 优先）", widget_type=WidgetType.INTEGER,
               validation=ValidationRule(min_value=1)),
    ]


def resolve_config(data: Dict[str, Any],
                   context: Optional[ExecutionContext] = None) -> ExperimentConfig:
    overrides = {key: data.get(key) for key in ("seed", "out", "limit", "threads")}
    cfg = load_config(data.get("config"), overrides)
    logger.info("[%s] 配置 %s: seed=%d, 输出目录 %s", context.run_id if context else "-",
                data.get("config") or "(默认)", cfg.seed, cfg.out_dir)
    return cfg


def workers_for(cfg: ExperimentConfig) -> int:
    return resolve_threads(cfg)
