"""
结果表、曲线文件与汇总
"""
import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

from ..core.errors import ConfigValidationError, CorruptionError

if TYPE_CHECKING:
    from ..sensing.dictionary import TrainingReport
    from .experiment import ExperimentRecord

logger = logging.getLogger(__name__)

DONE_MARKER = "_DONE"
CRITICAL_GAIN_DB = 0.5

RESULTS_HEADER = ["method", "sr", "M", "qbits", "psnr_mean", "psnr_std", "ssim_mean", "ssim_std",
                  "mu", "n_exact", "build_sec", "recon_sec_mean"]
PER_IMAGE_HEADER = ["method", "sr", "M", "qbits", "seed", "image_index", "mse", "psnr", "ssim",
                    "residual"]
COHERENCE_HEADER = ["method", "sr", "M", "qbits", "mu_unlifted", "mu_lifted", "mu_tail"]
SUMMARY_HEADER = ["sr", "M", "psnr_optimized", "psnr_gaussian", "psnr_gain",
                  "ssim_optimized", "ssim_gaussian", "ssim_gain"]


def _num(value: float, digits: int = 6) -> str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{digits}f}"


def _open(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="")


def _writer(handle):
    return csv.writer(handle, lineterminator="\n")


def _cell(record: "ExperimentRecord") -> List[str]:
    return [record.method.value, _num(record.sr, 4), str(record.m), str(record.quant_bits or 0)]


def write_results_csv(path: Path, records: Sequence["ExperimentRecord"], timings: bool = True) -> None:
    """每个 (方法, 采样率) 一行；不记录耗时时该两列写 0，使输出可逐字节复现"""
    with _open(path) as handle:
        writer = _writer(handle)
        writer.writerow(RESULTS_HEADER)
        for record in records:
            q = record.quality
            writer.writerow(_cell(record) + [
                _num(q.psnr_mean), _num(q.psnr_std), _num(q.ssim_mean), _num(q.ssim_std),
                _num(record.mu), str(q.n_exact),
                _num(record.build_sec if timings else 0.0),
                _num(record.recon_sec_mean if timings else 0.0),
            ])


def write_per_image_csv(path: Path, records: Sequence["ExperimentRecord"]) -> None:
    with _open(path) as handle:
        writer = _writer(handle)
        writer.writerow(PER_IMAGE_HEADER)
        for record in records:
            for row in record.seed_rows:
                writer.writerow(_cell(record) + [
                    "" if row.seed is None else str(row.seed), str(row.image_index),
                    _num(row.quality.mse), _num(row.quality.psnr), _num(row.quality.ssim),
                    _num(row.residual),
                ])


def write_coherence_csv(path: Path, records: Sequence["ExperimentRecord"]) -> None:
    with _open(path) as handle:
        writer = _writer(handle)
        writer.writerow(COHERENCE_HEADER)
        for record in records:
            profile = record.coherence
            writer.writerow(_cell(record) + [
                _num(profile.unlifted), _num(profile.lifted), _num(profile.lifted_tail)])


def write_training_csv(path: Path, report: "TrainingReport") -> None:
    """K-SVD 每轮目标函数与替换原子数"""
    with _open(path) as handle:
        writer = _writer(handle)
        writer.writerow(["sweep", "objective", "replaced"])
        for i, (objective, replaced) in enumerate(zip(report.objectives, report.replaced), start=1):
            writer.writerow([str(i), f"{objective:.6e}", str(replaced)])


def emit_curves(records: Sequence["ExperimentRecord"], out_dir: Path) -> List[Path]:
    """按方法写出 "sr 值" 两列的 PSNR/SSIM 曲线文件，按采样率升序"""
    by_method: Dict[str, List["ExperimentRecord"]] = defaultdict(list)
    for record in records:
        by_method[record.method.value].append(record)

    paths = []
    for method, items in by_method.items():
        items = sorted(items, key=lambda r: r.sr)
        psnrs = [r.quality.psnr_mean for r in items]
        if any(b < a for a, b in zip(psnrs, psnrs[1:])):
            logger.warning("%s 的 PSNR 随采样率不单调", method)
        for metric, values in (("psnr", psnrs), ("ssim", [r.quality.ssim_mean for r in items])):
            path = out_dir / f"curve_{metric}_{method}.dat"
            with _open(path) as handle:
                for record, value in zip(items, values):
                    handle.write(f"{record.sr:.6f} {_num(value)}\n")
            paths.append(path)
    return paths


@dataclass
class ResultRow:
    """results.csv 中读回的一行"""
    method: str
    sr: float
    m: int
    qbits: int
    psnr_mean: float
    ssim_mean: float
    mu: float


@dataclass
class Summary:
    """两种方法的对比：逐采样率增益与临界采样率"""
    rows: List[ResultRow] = field(default_factory=list)
    gains: List[Tuple[float, int, float, float]] = field(default_factory=list)   # (sr, M, ΔPSNR, ΔSSIM)
    critical_sr: Dict[str, Optional[float]] = field(default_factory=dict)
    complete: bool = True


def read_results(path: Path) -> List[ResultRow]:
    if not path.is_file():
        raise ConfigValidationError(f"结果文件不存在: {path}")
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != RESULTS_HEADER:
            raise CorruptionError(f"结果文件表头不符: {reader.fieldnames}")
        try:
            return [ResultRow(method=r["method"], sr=float(r["sr"]), m=int(r["M"]), qbits=int(r["qbits"]),
                              psnr_mean=float(r["psnr_mean"]), ssim_mean=float(r["ssim_mean"]),
                              mu=float(r["mu"]))
                    for r in reader]
        except (TypeError, ValueError) as e:
            raise CorruptionError(f"结果文件内容无法解析: {e}")


def _step(a: float, b: float) -> float:
    if math.isinf(a) and math.isinf(b):
        return 0.0
    return b - a


def critical_sr(points: Sequence[Tuple[float, float]], threshold: float = CRITICAL_GAIN_DB) -> Optional[float]:
    """此后每一步 PSNR 提升都小于阈值的最小采样率"""
    points = sorted(points)
    if not points:
        return None
    for i, (sr, _) in enumerate(points):
        tail = [p for _, p in points[i:]]
        if all(_step(a, b) < threshold for a, b in zip(tail, tail[1:])):
            return sr
    return points[-1][0]


def summarize(out_dir: Path, threshold: float = CRITICAL_GAIN_DB) -> Summary:
    """读取 results.csv，写出 summary.csv"""
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        raise ConfigValidationError(f"结果目录不存在: {out_dir}")
    rows = read_results(out_dir / "results.csv")
    if not rows:
        raise ConfigValidationError(f"结果文件为空: {out_dir / 'results.csv'}")

    summary = Summary(rows=rows, complete=(out_dir / DONE_MARKER).exists())
    if not summary.complete:
        logger.warning("%s 中缺少 %s 标记，结果可能不完整", out_dir, DONE_MARKER)

    by_method: Dict[str, Dict[int, ResultRow]] = defaultdict(dict)
    for row in rows:
        by_method[row.method][row.m] = row
    for method, cells in by_method.items():
        summary.critical_sr[method] = critical_sr([(r.sr, r.psnr_mean) for r in cells.values()], threshold)

    optimized = by_method.get("optimized", {})
    gaussian = by_method.get("gaussian", {})
    with _open(out_dir / "summary.csv") as handle:
        writer = _writer(handle)
        writer.writerow(SUMMARY_HEADER)
        for m in sorted(set(optimized) & set(gaussian)):
            a, b = optimized[m], gaussian[m]
            d_psnr, d_ssim = _step(b.psnr_mean, a.psnr_mean), a.ssim_mean - b.ssim_mean
            summary.gains.append((a.sr, m, d_psnr, d_ssim))
            writer.writerow([_num(a.sr, 4), str(m), _num(a.psnr_mean), _num(b.psnr_mean), _num(d_psnr),
                             _num(a.ssim_mean), _num(b.ssim_mean), _num(d_ssim)])
    with _open(out_dir / "critical_sr.csv") as handle:
        writer = _writer(handle)
        writer.writerow(["method", "critical_sr"])
        for method in sorted(summary.critical_sr):
            value = summary.critical_sr[method]
            writer.writerow([method, "" if value is None else _num(value, 4)])
    return summary
