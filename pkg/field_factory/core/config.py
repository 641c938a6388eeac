"""
配置模型与配置文件加载
"""
import configparser
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import (BaseModel, ConfigDict, Field, ValidationError, ValidationInfo,
                      field_validator, model_validator)

from .errors import ConfigValidationError


class DictionaryKind(str, Enum):
    """字典来源"""
    KSVD = "ksvd"
    DCT = "dct"


class Provenance(str, Enum):
    """采样矩阵来源"""
    OPTIMIZED = "optimized"
    GAUSSIAN = "gaussian"


class NoiseModel(str, Enum):
    """探测噪声模型"""
    NONE = "none"
    GAUSSIAN = "gaussian"


class MatrixRole(str, Enum):
    """矩阵文件角色"""
    DICTIONARY = "dictionary"
    SAMPLING = "sampling"
    GRAM = "gram"
    EQUIVALENT = "equivalent"


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


def _none_if_blank(value: Any) -> Any:
    if isinstance(value, str) and value.strip().lower() in ("", "none", "off"):
        return None
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", use_enum_values=False)


class TrainingConfig(_Section):
    """字典训练配置"""
    kind: DictionaryKind = DictionaryKind.KSVD
    n_atoms: int = Field(1024, ge=1)             # K
    sparsity: int = Field(8, ge=1)               # T0
    iterations: int = Field(30, ge=1)            # K-SVD 迭代轮数
    seed: Optional[int] = None
    replace_unused: bool = True                  # 替换未使用的原子
    residual_tol: float = Field(1e-6, ge=0.0)    # OMP 残差容限（相对 ||y||）
    progress: bool = True
    path: Optional[str] = None                   # 字典文件，默认 out_dir/dictionary.gimat

    @field_validator("seed", "path", mode="before")
    @classmethod
    def blank_to_none(cls, value: Any) -> Any:
        return _none_if_blank(value)


class DataConfig(_Section):
    """数据集配置"""
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    limit: Optional[int] = Field(None, ge=1)     # 每个IDX文件最多读取的图像数
    train_count: int = Field(2000, ge=1)
    test_count: int = Field(200, ge=1)
    train_seed: Optional[int] = None
    test_seed: Optional[int] = None

    @field_validator("train_path", "test_path", "limit", "train_seed", "test_seed", mode="before")
    @classmethod
    def blank_to_none(cls, value: Any) -> Any:
        return _none_if_blank(value)


class FieldsConfig(_Section):
    """光场（采样矩阵）配置"""
    methods: List[Provenance] = Field(default_factory=lambda: [Provenance.OPTIMIZED, Provenance.GAUSSIAN])
    sr_grid: List[float] = Field(default_factory=lambda: [0.05, 0.10, 0.20, 0.30, 0.51])
    m_values: Optional[List[int]] = None         # 显式给出 M 时优先于 sr_grid
    quant_bits: Optional[int] = Field(None, ge=1, le=16)
    gaussian_seeds: int = Field(3, ge=1)
    gaussian_seed: Optional[int] = None

    @field_validator("methods", "sr_grid", "m_values", "quant_bits", "gaussian_seed", mode="before")
    @classmethod
    def parse_text(cls, value: Any, info: ValidationInfo) -> Any:
        value = _none_if_blank(value)
        if info.field_name in ("methods", "sr_grid", "m_values"):
            value = _split_list(value)
        return value

    @field_validator("sr_grid")
    @classmethod
    def check_sr(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("sr_grid 不能为空")
        for sr in value:
            if not 0.0 < sr <= 1.0:
                raise ValueError(f"采样率必须在 (0, 1] 内: {sr}")
        return value

    @field_validator("m_values")
    @classmethod
    def check_m(cls, value: Optional[List[int]]) -> Optional[List[int]]:
        if value is not None:
            if not value:
                raise ValueError("m_values 不能为空")
            if min(value) < 1:
                raise ValueError("M 必须为正整数")
        return value

    @field_validator("methods")
    @classmethod
    def check_methods(cls, value: List[Provenance]) -> List[Provenance]:
        if not value:
            raise ValueError("methods 不能为空")
        return list(dict.fromkeys(value))


class NoiseConfig(_Section):
    """噪声描述"""
    model: NoiseModel = NoiseModel.NONE
    snr_db: float = 40.0
    seed: Optional[int] = None

    @field_validator("seed", mode="before")
    @classmethod
    def blank_to_none(cls, value: Any) -> Any:
        return _none_if_blank(value)


class OutputConfig(_Section):
    """输出配置"""
    out_dir: str = "results"
    record_timings: bool = False                 # 为 true 时写入实测耗时，结果不再逐字节可复现


class ExperimentConfig(_Section):
    """一次完整实验的配置"""
    seed: int = 0
    threads: int = Field(1, ge=1)
    data: DataConfig = Field(default_factory=DataConfig)
    dictionary: TrainingConfig = Field(default_factory=TrainingConfig)
    fields: FieldsConfig = Field(default_factory=FieldsConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def derive_seeds(self) -> "ExperimentConfig":
        # 未显式给出的子种子由主种子按固定偏移派生
        if self.data.train_seed is None:
            self.data.train_seed = self.seed + 1
        if self.data.test_seed is None:
            self.data.test_seed = self.seed + 2
        if self.dictionary.seed is None:
            self.dictionary.seed = self.seed + 3
        if self.fields.gaussian_seed is None:
            self.fields.gaussian_seed = self.seed + 4
        if self.noise.seed is None:
            self.noise.seed = self.seed + 5
        return self

    @property
    def out_dir(self) -> Path:
        return Path(self.output.out_dir)

    @property
    def dictionary_path(self) -> Path:
        if self.dictionary.path:
            return Path(self.dictionary.path)
        return self.out_dir / "dictionary.gimat"


_TOP_LEVEL_SECTION = "experiment"


def parse_config_text(text: str, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """解析 key = value 分节文本并校验"""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigValidationError(f"配置文件语法错误: {e}")

    raw: Dict[str, Any] = {}
    for section in parser.sections():
        items = dict(parser.items(section))
        if section == _TOP_LEVEL_SECTION:
            raw.update(items)
        else:
            raw[section] = items

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "seed":
            raw["seed"] = value
        elif key == "out":
            raw.setdefault("output", {})["out_dir"] = str(value)
        elif key == "limit":
            raw.setdefault("data", {})["limit"] = value
        elif key == "threads":
            raw["threads"] = value
        else:
            raise ConfigValidationError(f"未知的覆盖项: {key}")

    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigValidationError(f"配置校验失败:\n{e}")


def load_config(path: Optional[str], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """读取配置文件；path 为空时只使用默认值和覆盖项"""
    if not path:
        return parse_config_text("", overrides)
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigValidationError(f"配置文件不存在: {path}")
    return parse_config_text(config_path.read_text(encoding="utf-8"), overrides)


def resolve_threads(cfg: Optional[ExperimentConfig] = None) -> int:
    """工作线程数：GI_THREADS 环境变量优先"""
    env = os.environ.get("GI_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigValidationError(f"GI_THREADS 必须是整数: {env}")
        if value < 1:
            raise ConfigValidationError(f"GI_THREADS 必须为正: {env}")
        return value
    return cfg.threads if cfg is not None else 1
