"""
受约束的 K-SVD 字典学习与 OMP 稀疏编码

字典第一列恒为 N^(-1/2)，其余各列零均值、单位范数。
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from tqdm import tqdm

from ..core.config import DictionaryKind, MatrixRole, TrainingConfig
from ..core.errors import (ArgumentError, DegenerateInputError, DegenerateMatrixError,
                           DictionaryConstraintError)
from .data import MatrixMeta, matrix_checksum, read_matrix_file, write_matrix

logger = logging.getLogger(__name__)

FIRST_ATOM_TOL = 1e-12
ZERO_MEAN_TOL = 1e-9
UNIT_NORM_TOL = 1e-9

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True, eq=False)
class SparseCode:
    """稀疏系数向量 z"""
    coefficients: np.ndarray                     # 长度 K
    support: Tuple[int, ...]                     # 非零位置（0 起始，按选入顺序）
    residual_norm: float = 0.0

    @property
    def nnz(self) -> int:
        return len(self.support)


@dataclass(frozen=True, eq=False)
class Dictionary:
    """N x K 字典 Ψ"""
    atoms: np.ndarray
    sparsity: int = 8                            # 训练时的 T0
    height: int = 0
    width: int = 0
    kind: DictionaryKind = DictionaryKind.KSVD

    def __post_init__(self) -> None:
        atoms = np.array(self.atoms, dtype=np.float64)
        if atoms.ndim != 2:
            raise ArgumentError(f"字典必须是二维矩阵，得到 {atoms.shape}")
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        if not self.height or not self.width:
            object.__setattr__(self, "height", atoms.shape[0])
            object.__setattr__(self, "width", 1)
        if self.height * self.width != atoms.shape[0]:
            raise ArgumentError(f"图像尺寸 {self.height}x{self.width} 与原子长度 {atoms.shape[0]} 不符")

    @property
    def n_pixels(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]

    @cached_property
    def checksum(self) -> str:
        return matrix_checksum(self.atoms)

    def validate(self) -> None:
        """检查首列常数、其余列零均值、单位范数"""
        n, k = self.atoms.shape
        first = np.max(np.abs(self.atoms[:, 0] - n ** -0.5))
        if first > FIRST_ATOM_TOL:
            raise DictionaryConstraintError(f"首列偏离 N^(-1/2): {first:.3e}")
        if k > 1:
            sums = np.max(np.abs(self.atoms[:, 1:].sum(axis=0)))
            if sums > ZERO_MEAN_TOL:
                raise DictionaryConstraintError(f"原子不是零均值: {sums:.3e}")
        norms = np.max(np.abs(np.linalg.norm(self.atoms, axis=0) - 1.0))
        if norms > UNIT_NORM_TOL:
            raise DictionaryConstraintError(f"原子不是单位范数: {norms:.3e}")

    def save(self, path: Union[str, Path], seed: Optional[int] = None) -> None:
        meta = MatrixMeta(role=MatrixRole.DICTIONARY, seed=seed, provenance=self.kind.value,
                          sparsity=self.sparsity, height=self.height, width=self.width)
        write_matrix(self.atoms, path, meta)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Dictionary":
        content = read_matrix_file(path)
        extra = content.meta.model_extra if content.meta is not None else {}
        extra = extra or {}
        kind = DictionaryKind(content.meta.provenance) if content.meta and content.meta.provenance \
            else DictionaryKind.KSVD
        return cls(
            atoms=content.matrix,
            sparsity=int(extra.get("sparsity", 8)),
            height=int(extra.get("height", 0)),
            width=int(extra.get("width", 0)),
            kind=kind,
        )


def constant_atom(n: int) -> np.ndarray:
    return np.full(n, n ** -0.5)


def project_atom(vector: np.ndarray) -> Optional[np.ndarray]:
    """投影到零均值子空间并归一化；近似常数向量返回 None"""
    atom = np.asarray(vector, dtype=np.float64) - np.mean(vector)
    norm = np.linalg.norm(atom)
    if norm <= 1e-10 * max(1.0, np.linalg.norm(vector)):
        return None
    atom = atom / norm
    # 归一化后再去一次均值，压低舍入误差
    atom -= atom.mean()
    return atom / np.linalg.norm(atom)


def _positive_peak(atom: np.ndarray) -> np.ndarray:
    """符号约定：绝对值最大的元素为正"""
    return -atom if atom[np.argmax(np.abs(atom))] < 0 else atom


def omp(d: np.ndarray, y: np.ndarray, t0: int, residual_tol: Optional[float] = None) -> SparseCode:
    """正交匹配追踪

    每步选择 |<d_j, r>| / ||d_j|| 最大的列，在已选支撑上重新求最小二乘。
    支撑大小达到 t0 或残差范数不超过 residual_tol（默认 1e-6·||y||）时停止。
    """
    d = np.asarray(d, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if d.ndim != 2 or d.shape[0] != y.size:
        raise ArgumentError(f"矩阵形状 {d.shape} 与向量长度 {y.size} 不符")
    if t0 < 1:
        raise ArgumentError(f"稀疏度必须至少为 1: {t0}")

    norms = np.linalg.norm(d, axis=0)
    if np.any(norms <= np.finfo(np.float64).tiny):
        raise DegenerateMatrixError(f"矩阵第 {int(np.argmin(norms))} 列为零")

    coefficients = np.zeros(d.shape[1])
    y_norm = float(np.linalg.norm(y))
    if y_norm == 0.0:
        return SparseCode(coefficients, (), 0.0)
    tol = 1e-6 * y_norm if residual_tol is None else residual_tol

    support: List[int] = []
    gamma = np.empty(0)
    residual = y
    r_norm = y_norm
    while len(support) < min(t0, d.shape[1]) and r_norm > tol:
        scores = np.abs(d.T @ residual) / norms
        scores[support] = -1.0
        k = int(np.argmax(scores))
        if scores[k] <= 1e-12 * r_norm:
            break
        trial = support + [k]
        solution = linalg.lstsq(d[:, trial], y, check_finite=False)[0]
        trial_residual = y - d[:, trial] @ solution
        trial_norm = float(np.linalg.norm(trial_residual))
        if trial_norm > r_norm:
            break
        support, gamma, residual, r_norm = trial, solution, trial_residual, trial_norm

    coefficients[support] = gamma
    return SparseCode(coefficients, tuple(support), r_norm)


def _gram_omp(gram: np.ndarray, norms: np.ndarray, alpha0: np.ndarray, x_sq: float,
              t0: int, tol_sq: float) -> Tuple[List[int], np.ndarray, float]:
    """基于 Gram 矩阵和增量 Cholesky 分解的 OMP，选择规则与 omp 相同"""
    n_max = min(t0, len(gram))
    chol = np.zeros((n_max, n_max))
    support: List[int] = []
    gamma = np.empty(0)
    alpha = alpha0
    err = x_sq

    while len(support) < n_max and err > tol_sq:
        scores = np.abs(alpha) / norms
        scores[support] = -1.0
        k = int(np.argmax(scores))
        if scores[k] <= 1e-12 * math.sqrt(max(err, 0.0)):
            break
        n = len(support)
        if n > 0:
            w = linalg.solve_triangular(chol[:n, :n], gram[support, k], lower=True, check_finite=False)
            lkk = gram[k, k] - w @ w
            if lkk <= _EPS * gram[k, k]:
                # 新列与已选列线性相关
                break
            chol[n, :n] = w
            chol[n, n] = math.sqrt(lkk)
        else:
            chol[0, 0] = math.sqrt(gram[k, k])
        support.append(k)
        gamma = linalg.cho_solve((chol[:n + 1, :n + 1], True), alpha0[support], check_finite=False)
        alpha = alpha0 - gram[:, support] @ gamma
        err = x_sq - gamma @ alpha0[support]

    return support, gamma, math.sqrt(max(err, 0.0))


def omp_batch(d: np.ndarray, x: np.ndarray, t0: int, residual_tol: float = 1e-6,
              workers: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """对 x 的每一列做 OMP，返回 (K x L 系数矩阵, 残差范数)

    residual_tol 相对于每列信号范数。各列互不相关，可多线程。
    """
    d = np.asarray(d, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if d.shape[0] != x.shape[0]:
        raise ArgumentError(f"矩阵形状 {d.shape} 与信号 {x.shape} 不符")
    if t0 < 1:
        raise ArgumentError(f"稀疏度必须至少为 1: {t0}")

    gram = d.T @ d
    norms = np.sqrt(np.diag(gram))
    if np.any(norms <= np.finfo(np.float64).tiny):
        raise DegenerateMatrixError(f"矩阵第 {int(np.argmin(norms))} 列为零")
    dtx = d.T @ x
    x_sq = np.einsum("ij,ij->j", x, x)

    codes = np.zeros((d.shape[1], x.shape[1]))
    residuals = np.zeros(x.shape[1])

    def code_range(columns: range) -> None:
        for j in columns:
            if x_sq[j] == 0.0:
                continue
            support, gamma, res = _gram_omp(gram, norms, dtx[:, j], x_sq[j], t0,
                                            (residual_tol ** 2) * x_sq[j])
            codes[support, j] = gamma
            residuals[j] = res

    n = x.shape[1]
    if workers <= 1 or n < 2 * workers:
        code_range(range(n))
    else:
        bounds = np.linspace(0, n, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(code_range, [range(a, b) for a, b in zip(bounds[:-1], bounds[1:])]))
    return codes, residuals


def replace_unused_atoms(dictionary: Dictionary, usage: Sequence[int], x: np.ndarray, seed: int,
                         residual: Optional[np.ndarray] = None) -> Dictionary:
    """用表示最差的训练列替换未被使用的原子（首列除外）"""
    atoms = np.array(dictionary.atoms)
    if residual is None:
        codes, _ = omp_batch(atoms, x, dictionary.sparsity)
        residual = x - atoms @ codes
    replaced = _replace_unused(atoms, np.asarray(usage), np.asarray(x, dtype=np.float64),
                               residual, np.random.default_rng(seed))
    if not replaced:
        return dictionary
    return Dictionary(atoms, dictionary.sparsity, dictionary.height, dictionary.width, dictionary.kind)


def _replace_unused(atoms: np.ndarray, usage: np.ndarray, x: np.ndarray, residual: np.ndarray,
                    rng: np.random.Generator) -> int:
    dead = [k for k in range(1, atoms.shape[1]) if usage[k] == 0]
    if not dead:
        return 0
    errors = np.einsum("ij,ij->j", residual, residual)
    order = np.argsort(-errors, kind="stable")
    position = 0
    for k in dead:
        atom = None
        while atom is None and position < len(order) and errors[order[position]] > 0.0:
            atom = project_atom(x[:, order[position]])
            position += 1
        if atom is None:
            atom = project_atom(rng.standard_normal(atoms.shape[0]))
        atoms[:, k] = atom
    return len(dead)


@dataclass
class TrainingReport:
    """K-SVD 训练记录"""
    objectives: List[float] = field(default_factory=list)   # 每轮稀疏编码后的 ||X - ΨZ||_F^2
    replaced: List[int] = field(default_factory=list)       # 每轮替换的原子数
    final_objective: float = 0.0
    rms_error: float = 0.0                                   # 每像素 RMS 表示误差
    duration: float = 0.0


class KSVDTrainer:
    """受约束的 K-SVD 训练器"""

    def __init__(self, config: TrainingConfig, workers: int = 1):
        self.config = config
        self.workers = workers
        self.report = TrainingReport()

    def fit(self, x: np.ndarray, height: int = 0, width: int = 0) -> Dictionary:
        cfg = self.config
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ArgumentError(f"训练矩阵必须是 N x L，得到 {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ArgumentError("训练矩阵包含非有限值")
        if not np.any(x):
            raise DegenerateInputError("训练矩阵全为零")
        n, n_signals = x.shape
        if cfg.n_atoms < n:
            raise ArgumentError(f"原子数 K={cfg.n_atoms} 小于信号维数 N={n}")
        if n_signals < cfg.n_atoms:
            logger.warning("训练样本数 %d 少于原子数 %d", n_signals, cfg.n_atoms)

        start = time.perf_counter()
        rng = np.random.default_rng(cfg.seed or 0)
        atoms = self._initial_atoms(x, cfg.n_atoms, rng)
        self.report = TrainingReport()

        carried: Optional[np.ndarray] = None
        sweeps = tqdm(range(cfg.iterations), desc="K-SVD", disable=not cfg.progress)
        for sweep in sweeps:
            codes, residual = self._code(atoms, x, carried)
            objective = float(np.sum(residual ** 2))
            if self.report.objectives and objective > self.report.objectives[-1] * (1 + 1e-9):
                logger.warning("第 %d 轮目标函数上升: %.6e -> %.6e",
                               sweep + 1, self.report.objectives[-1], objective)
            self.report.objectives.append(objective)
            usage = np.count_nonzero(codes, axis=1)

            self._update_atoms(atoms, codes, residual)
            replaced = 0
            if cfg.replace_unused:
                replaced = _replace_unused(atoms, usage, x, residual, rng)
            self.report.replaced.append(replaced)
            # 被替换的原子在 codes 中系数为零，更新后的编码对新字典仍然有效
            carried = codes
            logger.info("K-SVD 第 %d/%d 轮: 目标 %.6e, 替换原子 %d",
                        sweep + 1, cfg.iterations, objective, replaced)

        _, residual = self._code(atoms, x, carried)
        final = float(np.sum(residual ** 2))
        self.report.final_objective = final
        self.report.rms_error = math.sqrt(final / x.size)
        self.report.duration = time.perf_counter() - start

        dictionary = Dictionary(atoms, cfg.sparsity, height, width, DictionaryKind.KSVD)
        dictionary.validate()
        return dictionary

    def _code(self, atoms: np.ndarray, x: np.ndarray,
              carried: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
        """OMP 重新编码；逐列保留 OMP 结果与上一轮更新后编码中残差较小者

        两者非零数都不超过 T₀，因此目标函数逐轮不增。
        """
        codes, _ = omp_batch(atoms, x, self.config.sparsity, self.config.residual_tol, self.workers)
        residual = x - atoms @ codes
        if carried is None:
            return codes, residual
        carried_residual = x - atoms @ carried
        keep = (np.einsum("ij,ij->j", carried_residual, carried_residual)
                < np.einsum("ij,ij->j", residual, residual))
        if np.any(keep):
            codes[:, keep] = carried[:, keep]
            residual[:, keep] = carried_residual[:, keep]
            logger.debug("保留上一轮编码的列数: %d", int(np.count_nonzero(keep)))
        return codes, residual

    @staticmethod
    def _initial_atoms(x: np.ndarray, n_atoms: int, rng: np.random.Generator) -> np.ndarray:
        """首列为常数；其余取随机训练列的零均值归一化，重复或近似常数时用随机向量"""
        n, n_signals = x.shape
        atoms = np.empty((n, n_atoms))
        atoms[:, 0] = constant_atom(n)
        candidates = iter(rng.permutation(n_signals))
        for k in range(1, n_atoms):
            atom = None
            for j in candidates:
                atom = project_atom(x[:, j])
                if atom is not None and np.max(np.abs(atoms[:, 1:k].T @ atom), initial=0.0) < 1 - 1e-6:
                    break
                atom = None
            if atom is None:
                atom = project_atom(rng.standard_normal(n))
            atoms[:, k] = atom
        return atoms

    @staticmethod
    def _update_atoms(atoms: np.ndarray, codes: np.ndarray, residual: np.ndarray) -> None:
        """逐个原子做秩一更新；首列只更新系数，其余列投影到零均值后归一化"""
        n = atoms.shape[0]
        for k in range(atoms.shape[1]):
            users = np.flatnonzero(codes[k])
            if users.size == 0:
                continue
            error = residual[:, users] + np.outer(atoms[:, k], codes[k, users])
            if k == 0:
                atom = constant_atom(n)
            else:
                centered = error - error.mean(axis=0, keepdims=True)
                u = linalg.svd(centered, full_matrices=False, check_finite=False)[0]
                atom = project_atom(u[:, 0])
                if atom is None:
                    continue
                atom = _positive_peak(atom)
            coefficients = atom @ error
            atoms[:, k] = atom
            codes[k, users] = coefficients
            residual[:, users] = error - np.outer(atom, coefficients)
        atoms[:, 0] = constant_atom(n)


def ksvd_train(x: np.ndarray, cfg: TrainingConfig, height: int = 0, width: int = 0,
               workers: int = 1) -> Dictionary:
    """在 N x L 训练矩阵上学习受约束字典"""
    return KSVDTrainer(cfg, workers).fit(x, height, width)


def _overcomplete_dct(n: int, k: int) -> np.ndarray:
    basis = np.cos(np.outer(np.arange(n), np.arange(k)) * np.pi / k)
    basis[:, 0] = constant_atom(n)
    for j in range(1, k):
        basis[:, j] = project_atom(basis[:, j])
    return basis


def dct_dictionary(height: int, width: int, n_atoms: int, sparsity: int = 8) -> Dictionary:
    """可分离二维过完备 DCT 字典，满足与学习字典相同的约束"""
    n = height * width
    if n_atoms < n:
        raise ArgumentError(f"原子数 K={n_atoms} 小于信号维数 N={n}")
    side = math.ceil(math.sqrt(n_atoms))
    k_rows, k_cols = max(height, side), max(width, side)
    atoms = np.kron(_overcomplete_dct(height, k_rows), _overcomplete_dct(width, k_cols))
    atoms[:, 0] = constant_atom(n)
    for j in range(1, atoms.shape[1]):
        atoms[:, j] = project_atom(atoms[:, j])
    if atoms.shape[1] != n_atoms:
        logger.info("DCT 字典原子数取 %d（请求 %d）", atoms.shape[1], n_atoms)
    dictionary = Dictionary(atoms, sparsity, height, width, DictionaryKind.DCT)
    dictionary.validate()
    return dictionary


def representation_error(dictionary: Dictionary, x: np.ndarray, t0: Optional[int] = None,
                         workers: int = 1) -> float:
    """预算为 t0 的稀疏表示的每像素 RMS 误差"""
    x = np.asarray(x, dtype=np.float64)
    codes, _ = omp_batch(dictionary.atoms, x, t0 or dictionary.sparsity, workers=workers)
    return math.sqrt(float(np.sum((x - dictionary.atoms @ codes) ** 2)) / x.size)
