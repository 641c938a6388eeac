"""
重建质量指标（MSE / PSNR / 全局 SSIM）与互相干度
"""
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Union

import numpy as np

from ..core.errors import ArgumentError, DegenerateMatrixError
from .data import ImageVector

DYNAMIC_RANGE = 255.0

ImageLike = Union[ImageVector, np.ndarray]


def _pair(x: ImageLike, y: ImageLike):
    a = x.pixels if isinstance(x, ImageVector) else np.asarray(x, dtype=np.float64).reshape(-1)
    b = y.pixels if isinstance(y, ImageVector) else np.asarray(y, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ArgumentError(f"图像尺寸不一致: {a.shape} vs {b.shape}")
    if isinstance(x, ImageVector) and isinstance(y, ImageVector) and \
            (x.height, x.width) != (y.height, y.width):
        raise ArgumentError(f"图像尺寸不一致: {x.height}x{x.width} vs {y.height}x{y.width}")
    return a, b


def mse(x: ImageLike, y: ImageLike) -> float:
    a, b = _pair(x, y)
    return float(np.mean((a - b) ** 2))


def psnr(x: ImageLike, y: ImageLike, dynamic_range: float = DYNAMIC_RANGE) -> float:
    """10·log10(B²/MSE)，MSE 为零时返回 +inf"""
    if dynamic_range <= 0:
        raise ArgumentError(f"动态范围必须为正: {dynamic_range}")
    error = mse(x, y)
    if error == 0.0:
        return math.inf
    return 10.0 * math.log10(dynamic_range ** 2 / error)


def ssim(x: ImageLike, y: ImageLike, dynamic_range: float = DYNAMIC_RANGE) -> float:
    """整幅图像单窗口 SSIM，矩按 1/mn 计算"""
    a, b = _pair(x, y)
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    mu_a, mu_b = a.mean(), b.mean()
    var_a = np.mean((a - mu_a) ** 2)
    var_b = np.mean((b - mu_b) ** 2)
    cov = np.mean((a - mu_a) * (b - mu_b))
    numerator = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    denominator = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(numerator / denominator)


def mutual_coherence(d: np.ndarray) -> float:
    """列两两归一化内积绝对值的最大值（精确计算所有列对）"""
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[1] < 2:
        raise ArgumentError("互相干度至少需要两列")
    norms = np.linalg.norm(d, axis=0)
    if np.any(norms <= np.finfo(np.float64).tiny):
        raise DegenerateMatrixError(f"矩阵第 {int(np.argmin(norms))} 列为零")
    normalized = d / norms
    gram = np.abs(normalized.T @ normalized)
    np.fill_diagonal(gram, 0.0)
    return float(min(gram.max(), 1.0))


@dataclass(frozen=True)
class ImageQuality:
    """单幅图像的指标"""
    mse: float
    psnr: float
    ssim: float


def evaluate(reference: ImageLike, reconstruction: ImageLike,
             dynamic_range: float = DYNAMIC_RANGE) -> ImageQuality:
    return ImageQuality(
        mse=mse(reference, reconstruction),
        psnr=psnr(reference, reconstruction, dynamic_range),
        ssim=ssim(reference, reconstruction, dynamic_range),
    )


@dataclass
class QualityReport:
    """一组图像的指标汇总；PSNR 为 +inf 的图像不计入均值，单独计数"""
    images: List[ImageQuality] = field(default_factory=list)
    mse_mean: float = 0.0
    mse_std: float = 0.0
    psnr_mean: float = 0.0
    psnr_std: float = 0.0
    ssim_mean: float = 0.0
    ssim_std: float = 0.0
    n_exact: int = 0

    @property
    def count(self) -> int:
        return len(self.images)


def aggregate(reports: Sequence[ImageQuality]) -> QualityReport:
    """均值与总体标准差"""
    if not reports:
        raise ArgumentError("没有可汇总的图像")
    mses = np.array([r.mse for r in reports])
    ssims = np.array([r.ssim for r in reports])
    psnrs = np.array([r.psnr for r in reports])
    finite = psnrs[np.isfinite(psnrs)]
    n_exact = int(np.sum(np.isposinf(psnrs)))
    return QualityReport(
        images=list(reports),
        mse_mean=float(mses.mean()),
        mse_std=float(mses.std()),
        psnr_mean=float(finite.mean()) if finite.size else math.inf,
        psnr_std=float(finite.std()) if finite.size else 0.0,
        ssim_mean=float(ssims.mean()),
        ssim_std=float(ssims.std()),
        n_exact=n_exact,
    )
