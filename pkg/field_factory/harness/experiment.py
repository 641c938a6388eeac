"""
实验编排：训练/加载字典、构建光场、按采样率扫描并完成测量-重建-评估
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core.config import DictionaryKind, ExperimentConfig, MatrixRole, NoiseConfig, Provenance
from ..core.errors import ConfigValidationError
from ..sensing.data import Dataset, MatrixMeta, load_idx_images, random_subset, split_dataset, write_matrix
from ..sensing.dictionary import Dictionary, KSVDTrainer, TrainingReport, dct_dictionary
from ..sensing.fieldopt import (CoherenceProfile, FieldOptState, SamplingMatrix, build_state,
                                coherence_profile, equivalent_matrix, extend_sampling,
                                gaussian_sampling, lift_constant, nn_lift, optimize_sampling,
                                quantize_matrix)
from ..sensing.imaging import measure, reconstruct, rows_for_ratio, sampling_ratio, save_equivalent
from ..sensing.metrics import ImageQuality, QualityReport, aggregate, evaluate, mutual_coherence
from .tables import (DONE_MARKER, emit_curves, write_coherence_csv, write_per_image_csv,
                     write_results_csv, write_training_csv)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ImageRow:
    """单幅测试图像的评估结果"""
    image_index: int                             # 在源文件中的序号
    seed: Optional[int]                          # 高斯矩阵种子，优化方法为 None
    quality: ImageQuality
    residual: float


@dataclass
class ExperimentRecord:
    """一个 (方法, 采样率) 单元的结果"""
    method: Provenance
    sr: float
    m: int
    quant_bits: Optional[int]
    rows: List[ImageRow]                         # 每幅测试图像一行，高斯方法为各种子的均值
    seed_rows: List[ImageRow]                    # 每个 (种子, 图像) 一行
    quality: QualityReport
    mu: float
    coherence: CoherenceProfile
    build_sec: float = 0.0
    recon_sec_mean: float = 0.0


@dataclass
class FieldSet:
    """某个方法在最大行数下的采样矩阵（各采样率取前缀）"""
    method: Provenance
    unlifted: List[SamplingMatrix] = field(default_factory=list)
    build_sec: float = 0.0


def load_datasets(cfg: ExperimentConfig, need_train: bool = True) -> Tuple[Optional[Dataset], Dataset]:
    """按配置得到训练子集和测试子集

    未指定测试文件时，测试图像取自训练文件中未被选入训练子集的部分。
    """
    data = cfg.data
    if not data.train_path and (need_train or not data.test_path):
        raise ConfigValidationError("未配置训练数据路径 [data] train_path")

    train: Optional[Dataset] = None
    rest: Optional[Dataset] = None
    if data.train_path:
        full = load_idx_images(data.train_path, data.limit, split="train")
        if data.train_count > len(full) or (not data.test_path and data.train_count >= len(full)):
            raise ConfigValidationError(
                f"训练图像数 {data.train_count} 超出可用图像数 {len(full)}")
        train, rest = split_dataset(full, data.train_count, data.train_seed)

    pool = load_idx_images(data.test_path, data.limit, split="test") if data.test_path else rest
    if data.test_count > len(pool):
        raise ConfigValidationError(f"测试图像数 {data.test_count} 超出可用图像数 {len(pool)}")
    test = random_subset(pool, data.test_count, data.test_seed)
    return train, test


def train_dictionary(cfg: ExperimentConfig, train: Dataset,
                     workers: int = 1) -> Tuple[Dictionary, Optional[TrainingReport]]:
    """训练 K-SVD 字典，或生成显式 DCT 字典"""
    settings = cfg.dictionary
    if settings.kind == DictionaryKind.DCT:
        return dct_dictionary(train.height, train.width, settings.n_atoms, settings.sparsity), None

    trainer = KSVDTrainer(settings, workers)
    dictionary = trainer.fit(train.as_columns(), train.height, train.width)
    logger.info("字典训练完成: K=%d, T0=%d, RMS 误差 %.4f, 耗时 %.1fs",
                dictionary.n_atoms, dictionary.sparsity, trainer.report.rms_error,
                trainer.report.duration)
    return dictionary, trainer.report


def run_training(cfg: ExperimentConfig, workers: int = 1) -> Tuple[Dictionary, Optional[TrainingReport]]:
    """train-dict：训练并保存字典"""
    train, _ = load_datasets(cfg)
    dictionary, report = train_dictionary(cfg, train, workers)
    path = cfg.dictionary_path
    path.parent.mkdir(parents=True, exist_ok=True)
    dictionary.save(path, seed=cfg.dictionary.seed)
    if report is not None:
        write_training_csv(path.parent / "training.csv", report)
    logger.info("字典已保存: %s", path)
    return dictionary, report


def load_dictionary(cfg: ExperimentConfig) -> Dictionary:
    path = cfg.dictionary_path
    if not path.is_file():
        raise ConfigValidationError(f"字典文件不存在: {path}，请先运行 train-dict")
    return Dictionary.load(path)


def resolve_grid(cfg: ExperimentConfig, n_pixels: int, rank: int) -> List[int]:
    """采样行数网格（升序、去重），每个 M 不超过字典秩"""
    if cfg.fields.m_values:
        grid = sorted(set(cfg.fields.m_values))
    else:
        grid = sorted({rows_for_ratio(sr, n_pixels) for sr in cfg.fields.sr_grid})
    for m in grid:
        if m > n_pixels:
            raise ConfigValidationError(f"M={m} 超过像素数 {n_pixels}")
        if Provenance.OPTIMIZED in cfg.fields.methods and m > rank:
            raise ConfigValidationError(f"M={m} 超过字典秩 {rank}")
    return grid


def build_fields(cfg: ExperimentConfig, dictionary: Dictionary,
                 state: Optional[FieldOptState] = None) -> Tuple[FieldOptState, Dict[Provenance, FieldSet]]:
    """为每个方法生成最大行数的未抬升采样矩阵"""
    start = time.perf_counter()
    state = state or build_state(dictionary)
    state_sec = time.perf_counter() - start
    grid = resolve_grid(cfg, dictionary.n_pixels, state.rank)
    m_max = grid[-1]

    fields: Dict[Provenance, FieldSet] = {}
    for method in cfg.fields.methods:
        start = time.perf_counter()
        if method == Provenance.OPTIMIZED:
            matrices = [optimize_sampling(state, m_max)]
            elapsed = state_sec + time.perf_counter() - start
        else:
            matrices = [gaussian_sampling(m_max, dictionary.n_pixels, cfg.fields.gaussian_seed + i)
                        for i in range(cfg.fields.gaussian_seeds)]
            elapsed = (time.perf_counter() - start) / len(matrices)
        fields[method] = FieldSet(method, matrices, elapsed)
    return state, fields


def save_fields(cfg: ExperimentConfig, dictionary: Dictionary, state: FieldOptState,
                fields: Dict[Provenance, FieldSet]) -> List[Path]:
    """build-fields：保存 ΨΨᵀ、未抬升和抬升后的采样矩阵以及抬升后的等效矩阵 D̂"""
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    gram_path = out / "gram.gimat"
    write_matrix(dictionary.atoms @ dictionary.atoms.T, gram_path,
                 MatrixMeta(role=MatrixRole.GRAM, provenance=dictionary.kind.value,
                            source_checksum=state.dictionary_checksum, rank=state.rank))
    paths = [gram_path]
    for method, field_set in fields.items():
        for matrix in field_set.unlifted:
            suffix = method.value if matrix.seed is None else f"{method.value}_s{matrix.seed}"
            c = state.lift_constant if method == Provenance.OPTIMIZED else lift_constant(matrix.rows)
            lifted = nn_lift(matrix, c)
            if cfg.fields.quant_bits:
                lifted = quantize_matrix(lifted, cfg.fields.quant_bits)
            for name, item in ((f"fields_{suffix}.gimat", matrix), (f"fields_{suffix}_lifted.gimat", lifted)):
                item.save(out / name)
                paths.append(out / name)
            save_equivalent(lifted, dictionary, out / f"fields_{suffix}_equivalent.gimat")
            paths.append(out / f"fields_{suffix}_equivalent.gimat")
    logger.info("已保存 %d 个矩阵文件到 %s", len(paths), out)
    return paths


def _successive(state: FieldOptState, base: SamplingMatrix, grid: List[int]) -> List[SamplingMatrix]:
    """按升序行数逐次得到各阶段的未抬升矩阵"""
    if base.provenance == Provenance.OPTIMIZED:
        stages = [optimize_sampling(state, grid[0])]
        for m in grid[1:]:
            stages.append(extend_sampling(state, stages[-1], m))
        return stages
    return [base.prefix(m) for m in grid]


def _physical(cfg: ExperimentConfig, state: FieldOptState, matrix: SamplingMatrix) -> SamplingMatrix:
    """抬升并按配置量化，得到实际投射的光场"""
    # 优化矩阵使用对全部 r 行统一计算的 c，保证抬升后的矩阵同样具有前缀性质
    c = state.lift_constant if matrix.provenance == Provenance.OPTIMIZED else lift_constant(matrix.rows)
    lifted = nn_lift(matrix, c)
    if cfg.fields.quant_bits:
        lifted = quantize_matrix(lifted, cfg.fields.quant_bits)
    return lifted


def _mean_over_seeds(groups: List[List[ImageRow]]) -> List[ImageRow]:
    """每幅图像对各矩阵种子取指标均值；任一种子精确重建时 PSNR 均值为 +inf"""
    if len(groups) == 1:
        return groups[0]
    rows = []
    for per_seed in zip(*groups):
        quality = ImageQuality(
            mse=float(np.mean([row.quality.mse for row in per_seed])),
            psnr=float(np.mean([row.quality.psnr for row in per_seed])),
            ssim=float(np.mean([row.quality.ssim for row in per_seed])),
        )
        rows.append(ImageRow(per_seed[0].image_index, None, quality,
                             float(np.mean([row.residual for row in per_seed]))))
    return rows


class ExperimentRunner:
    """按 (方法, 采样率) 单元顺序执行实验，单元内对测试图像并行"""

    def __init__(self, cfg: ExperimentConfig, dictionary: Dictionary, test: Dataset, workers: int = 1):
        if test.n_pixels != dictionary.n_pixels:
            raise ConfigValidationError(
                f"测试图像像素数 {test.n_pixels} 与字典维数 {dictionary.n_pixels} 不符")
        self.cfg = cfg
        self.dictionary = dictionary
        self.test = test
        self.workers = workers

    def run(self) -> List[ExperimentRecord]:
        state, fields = build_fields(self.cfg, self.dictionary)
        grid = resolve_grid(self.cfg, self.dictionary.n_pixels, state.rank)
        records = []
        for method in self.cfg.fields.methods:
            field_set = fields[method]
            per_seed = [_successive(state, base, grid) for base in field_set.unlifted]
            for position, m in enumerate(grid):
                stages = [matrices[position] for matrices in per_seed]
                records.append(self._run_cell(state, method, m, stages, field_set.build_sec))
        return records

    def _run_cell(self, state: FieldOptState, method: Provenance, m: int,
                  stages: List[SamplingMatrix], base_sec: float) -> ExperimentRecord:
        sr = sampling_ratio(m, self.dictionary.n_pixels)
        groups: List[List[ImageRow]] = []
        mus, profiles, build_times, recon_times = [], [], [], []

        for unlifted in stages:
            start = time.perf_counter()
            physical = _physical(self.cfg, state, unlifted)
            build_times.append(base_sec + time.perf_counter() - start)

            d_hat = equivalent_matrix(physical, self.dictionary)
            mus.append(mutual_coherence(d_hat))
            profiles.append(coherence_profile(unlifted, physical, self.dictionary))

            def run_image(i: int) -> Tuple[ImageRow, float]:
                image = self.test[i]
                noise = NoiseConfig(model=self.cfg.noise.model, snr_db=self.cfg.noise.snr_db,
                                    seed=self.cfg.noise.seed + i)
                result = reconstruct(measure(physical, image, noise), physical, self.dictionary,
                                     equivalent=d_hat)
                row = ImageRow(int(self.test.indices[i]), physical.seed,
                               evaluate(image, result.image), result.residual_norm)
                return row, result.duration

            if self.workers > 1:
                with ThreadPoolExecutor(max_workers=self.workers) as pool:
                    outcomes = list(pool.map(run_image, range(len(self.test))))
            else:
                outcomes = [run_image(i) for i in range(len(self.test))]
            groups.append([row for row, _ in outcomes])
            recon_times.extend(duration for _, duration in outcomes)

        rows = _mean_over_seeds(groups)
        quality = aggregate([row.quality for row in rows])
        profile = CoherenceProfile(
            unlifted=float(np.mean([p.unlifted for p in profiles])),
            lifted=float(np.mean([p.lifted for p in profiles])),
            lifted_tail=float(np.mean([p.lifted_tail for p in profiles])),
        )
        record = ExperimentRecord(
            method=method, sr=sr, m=m, quant_bits=self.cfg.fields.quant_bits, rows=rows,
            seed_rows=[row for group in groups for row in group], quality=quality, mu=float(np.mean(mus)),
            coherence=profile,
            build_sec=float(np.mean(build_times)), recon_sec_mean=float(np.mean(recon_times)),
        )
        logger.info("%-9s SR=%.3f M=%d: PSNR %.2f dB, SSIM %.4f, μ=%.4f",
                    method.value, sr, m, quality.psnr_mean, quality.ssim_mean, record.mu)
        return record


def run_experiment(cfg: ExperimentConfig, dictionary: Optional[Dictionary] = None,
                   workers: int = 1) -> List[ExperimentRecord]:
    """完整扫描并写出结果表；成功结束时最后写入 _DONE 标记"""
    out = cfg.out_dir
    dictionary = dictionary or load_dictionary(cfg)
    _, test = load_datasets(cfg, need_train=False)
    runner = ExperimentRunner(cfg, dictionary, test, workers)

    out.mkdir(parents=True, exist_ok=True)
    marker = out / DONE_MARKER
    if marker.exists():
        marker.unlink()

    records = runner.run()
    timings = cfg.output.record_timings
    write_results_csv(out / "results.csv", records, timings)
    write_per_image_csv(out / "per_image.csv", records)
    write_coherence_csv(out / "coherence.csv", records)
    emit_curves(records, out)
    marker.write_bytes(b"")
    logger.info("实验完成，结果写入 %s", out)
    return records
