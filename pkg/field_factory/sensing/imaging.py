"""
鬼成像探测过程仿真 y = Φx + n 与字典域 OMP 重建
"""
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..core.config import MatrixRole, NoiseConfig, NoiseModel, Provenance
from ..core.errors import ArgumentError
from .data import ImageVector, MatrixMeta, write_matrix
from .dictionary import Dictionary, SparseCode, omp
from .fieldopt import SamplingMatrix, equivalent_matrix


@dataclass(frozen=True, eq=False)
class Measurement:
    """桶探测器测得的信号"""
    y: np.ndarray
    provenance: Provenance
    noise: NoiseConfig

    @property
    def n_rows(self) -> int:
        return self.y.size


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    """重建结果，x̂ = Ψẑ"""
    image: ImageVector
    code: SparseCode
    residual_norm: float
    duration: float


def measure(phi: SamplingMatrix, x: Union[ImageVector, np.ndarray],
            noise: Optional[NoiseConfig] = None) -> Measurement:
    """按噪声描述生成测量值；高斯噪声按目标测量信噪比（dB）缩放"""
    noise = noise or NoiseConfig()
    pixels = x.pixels if isinstance(x, ImageVector) else np.asarray(x, dtype=np.float64).reshape(-1)
    if phi.rows.shape[1] != pixels.size:
        raise ArgumentError(f"采样矩阵列数 {phi.rows.shape[1]} 与图像像素数 {pixels.size} 不符")

    y = phi.rows @ pixels
    if noise.model == NoiseModel.GAUSSIAN:
        signal = float(np.linalg.norm(y))
        if signal > 0.0:
            sigma = signal / np.sqrt(y.size) * 10.0 ** (-noise.snr_db / 20.0)
            rng = np.random.default_rng(noise.seed)
            y = y + sigma * rng.standard_normal(y.size)
    if not np.all(np.isfinite(y)):
        raise ArgumentError("测量值包含非有限值")
    y.setflags(write=False)
    return Measurement(y=y, provenance=phi.provenance, noise=noise)


def reconstruct(measurement: Measurement, phi: SamplingMatrix, dictionary: Dictionary,
                t0: Optional[int] = None, equivalent: Optional[np.ndarray] = None) -> ReconstructionResult:
    """在 D̂ = ΦΨ 上做 OMP 得到 ẑ，再由 x̂ = Ψẑ 重建

    equivalent 可传入预先算好的 D̂，避免逐幅图像重复计算。
    """
    if not phi.lifted:
        raise ArgumentError("重建使用的采样矩阵必须经过非负抬升")
    start = time.perf_counter()
    d_hat = equivalent_matrix(phi, dictionary) if equivalent is None else equivalent
    if d_hat.shape[0] != measurement.n_rows:
        raise ArgumentError(f"测量长度 {measurement.n_rows} 与采样行数 {d_hat.shape[0]} 不符")
    code = omp(d_hat, measurement.y, t0 or dictionary.sparsity)
    pixels = dictionary.atoms @ code.coefficients
    image = ImageVector(pixels, dictionary.height, dictionary.width)
    return ReconstructionResult(
        image=image,
        code=code,
        residual_norm=code.residual_norm,
        duration=time.perf_counter() - start,
    )


def sampling_ratio(m: int, n: int) -> float:
    """采样率 SR = M/N"""
    if n <= 0:
        raise ArgumentError(f"像素数必须为正: {n}")
    return m / n


def rows_for_ratio(ratio: float, n: int) -> int:
    """与采样率最接近的行数，至少为 1"""
    if not 0.0 < ratio <= 1.0:
        raise ArgumentError(f"采样率必须在 (0, 1] 内: {ratio}")
    return max(1, int(round(ratio * n)))


def save_equivalent(phi: SamplingMatrix, dictionary: Dictionary, path: Union[str, Path]) -> np.ndarray:
    """把重建实际使用的 D̂ = ΦΨ 写成矩阵文件，用于排查重建问题"""
    d_hat = equivalent_matrix(phi, dictionary)
    meta = MatrixMeta(role=MatrixRole.EQUIVALENT, seed=phi.seed, provenance=phi.provenance.value,
                      lifted=phi.lifted, quant_bits=phi.quant_bits, source_checksum=dictionary.checksum)
    write_matrix(d_hat, path, meta)
    return d_hat
