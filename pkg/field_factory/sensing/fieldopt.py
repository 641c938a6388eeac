"""
光场优化：基于 ΨΨᵀ 特征分解的闭式采样矩阵、逐次采样扩展、非负抬升、高斯基线与量化
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import linalg

from ..core.config import MatrixRole, Provenance
from ..core.errors import (ArgumentError, ConsistencyError, DegenerateMatrixError, NegativityError,
                           NumericalError, RankError)
from .data import MatrixMeta, matrix_checksum, read_matrix_file, write_matrix
from .dictionary import Dictionary
from .metrics import mutual_coherence

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
RECONSTRUCTION_TOL = 1e-8

DictionaryLike = Union[Dictionary, np.ndarray]


def _atoms(dictionary: DictionaryLike) -> np.ndarray:
    if isinstance(dictionary, Dictionary):
        return dictionary.atoms
    return np.asarray(dictionary, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class FieldOptState:
    """ΨΨᵀ 的特征分解（特征值降序）与全局抬升常数"""
    eigvecs: np.ndarray                          # V, N x N，列为特征向量
    eigvals: np.ndarray                          # Λ, 降序
    rank: int
    lift_constant: float                         # c = max(0, -min Vᵀ[:rank])
    dictionary_checksum: str

    @property
    def n_pixels(self) -> int:
        return self.eigvecs.shape[0]


@dataclass(frozen=True, eq=False)
class SamplingMatrix:
    """M x N 采样矩阵，每行是一帧投射的光场图案"""
    rows: np.ndarray
    lifted: bool = False
    provenance: Provenance = Provenance.OPTIMIZED
    seed: Optional[int] = None
    source_checksum: Optional[str] = None        # 优化矩阵对应的字典校验和
    quant_bits: Optional[int] = None

    def __post_init__(self) -> None:
        rows = np.array(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ArgumentError(f"采样矩阵必须是二维的，得到 {rows.shape}")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def shape(self):
        return self.rows.shape

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def prefix(self, m: int) -> "SamplingMatrix":
        """前 m 行（逐次采样中更早的阶段）"""
        if not 1 <= m <= self.n_rows:
            raise ArgumentError(f"行数 {m} 超出范围 [1, {self.n_rows}]")
        return SamplingMatrix(self.rows[:m], self.lifted, self.provenance, self.seed,
                              self.source_checksum, self.quant_bits)

    def save(self, path: Union[str, Path]) -> None:
        meta = MatrixMeta(role=MatrixRole.SAMPLING, seed=self.seed, provenance=self.provenance.value,
                          lifted=self.lifted, source_checksum=self.source_checksum,
                          quant_bits=self.quant_bits)
        write_matrix(self.rows, path, meta)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SamplingMatrix":
        content = read_matrix_file(path)
        meta = content.meta or MatrixMeta()
        extra = meta.model_extra or {}
        return cls(
            rows=content.matrix,
            lifted=bool(extra.get("lifted", False)),
            provenance=Provenance(meta.provenance or Provenance.OPTIMIZED.value),
            seed=meta.seed,
            source_checksum=extra.get("source_checksum"),
            quant_bits=extra.get("quant_bits"),
        )


def build_state(dictionary: DictionaryLike) -> FieldOptState:
    """对 ΨΨᵀ 做对称特征分解，特征值降序，特征向量绝对值最大元素取正"""
    atoms = _atoms(dictionary)
    if atoms.ndim != 2:
        raise ArgumentError(f"字典必须是二维矩阵，得到 {atoms.shape}")
    gram = atoms @ atoms.T
    try:
        eigvals, eigvecs = linalg.eigh(gram)
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"特征分解失败: {e}")

    # eigh 返回升序；稳定排序保证相同特征值按原序号排列
    order = np.argsort(-eigvals, kind="stable")
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    if eigvals[-1] < -RANK_TOL * max(eigvals[0], 1.0):
        logger.warning("ΨΨᵀ 出现负特征值 %.3e，已截断为 0", eigvals[-1])
    eigvals = np.clip(eigvals, 0.0, None)

    peaks = np.argmax(np.abs(eigvecs), axis=0)
    signs = np.where(eigvecs[peaks, np.arange(eigvecs.shape[1])] < 0, -1.0, 1.0)
    eigvecs = eigvecs * signs

    if eigvals[0] <= 0.0:
        raise DegenerateMatrixError("字典秩为 0")
    rank = int(np.sum(eigvals > RANK_TOL * eigvals[0]))

    error = np.linalg.norm(eigvecs @ np.diag(eigvals) @ eigvecs.T - gram) / np.linalg.norm(gram)
    if error > RECONSTRUCTION_TOL:
        raise NumericalError(f"特征分解重构误差过大: {error:.3e}")

    lift = max(0.0, -float(eigvecs[:, :rank].min()))
    eigvecs.setflags(write=False)
    eigvals.setflags(write=False)
    checksum = dictionary.checksum if isinstance(dictionary, Dictionary) else matrix_checksum(atoms)
    logger.info("ΨΨᵀ 特征分解完成: N=%d, 秩=%d, 抬升常数 c=%.6f", len(eigvals), rank, lift)
    return FieldOptState(eigvecs, eigvals, rank, lift, checksum)


def optimize_sampling(state: FieldOptState, m: int) -> SamplingMatrix:
    """闭式解 Φ̂ = V₁ᵀ：Vᵀ 的前 M 行"""
    if m < 1:
        raise ArgumentError(f"采样行数必须为正: {m}")
    if m > state.rank:
        raise RankError(f"采样行数 {m} 超过字典秩 {state.rank}")
    return SamplingMatrix(state.eigvecs[:, :m].T, lifted=False, provenance=Provenance.OPTIMIZED,
                          source_checksum=state.dictionary_checksum)


def extend_sampling(state: FieldOptState, phi: SamplingMatrix, m_new: int) -> SamplingMatrix:
    """逐次采样：在已有 M 行之后追加 Vᵀ 的第 M+1..M' 行，已有行保持不变"""
    if phi.provenance != Provenance.OPTIMIZED or phi.lifted:
        raise ConsistencyError("只能扩展未抬升的优化采样矩阵")
    if phi.source_checksum != state.dictionary_checksum:
        raise ConsistencyError("采样矩阵与特征分解来自不同的字典")
    m = phi.n_rows
    if m_new < m:
        raise ArgumentError(f"新行数 {m_new} 小于已有行数 {m}")
    if m_new > state.rank:
        raise RankError(f"采样行数 {m_new} 超过字典秩 {state.rank}")
    if not np.array_equal(phi.rows, state.eigvecs[:, :m].T):
        raise ConsistencyError("采样矩阵不是该特征分解的前缀")
    rows = np.vstack([phi.rows, state.eigvecs[:, m:m_new].T])
    return SamplingMatrix(rows, lifted=False, provenance=Provenance.OPTIMIZED,
                          source_checksum=phi.source_checksum)


def lift_constant(rows: np.ndarray) -> float:
    """按当前矩阵计算的最小抬升常数 max(0, -min Φ)"""
    return max(0.0, -float(np.min(rows)))


def nn_lift(phi: SamplingMatrix, c: float) -> SamplingMatrix:
    """非负抬升 Φ̂ + c·1"""
    required = lift_constant(phi.rows)
    if c < required:
        raise NegativityError(f"抬升常数 {c} 小于所需的 {required}")
    return SamplingMatrix(phi.rows + c, lifted=True, provenance=phi.provenance, seed=phi.seed,
                          source_checksum=phi.source_checksum, quant_bits=phi.quant_bits)


def gaussian_sampling(m: int, n: int, seed: int) -> SamplingMatrix:
    """独立标准正态分布的随机采样矩阵"""
    if m < 1 or n < 1:
        raise ArgumentError(f"矩阵尺寸必须为正: {m}x{n}")
    rows = np.random.default_rng(seed).standard_normal((m, n))
    return SamplingMatrix(rows, lifted=False, provenance=Provenance.GAUSSIAN, seed=seed)


def quantize_matrix(phi: SamplingMatrix, bits: int) -> SamplingMatrix:
    """把 [0, max] 均匀量化为 2^bits 个电平（四舍五入，0.5 进位）"""
    if not 1 <= bits <= 16:
        raise ArgumentError(f"量化位数必须在 [1, 16] 内: {bits}")
    if np.min(phi.rows) < 0:
        raise NegativityError("量化前采样矩阵必须非负")
    peak = float(np.max(phi.rows))
    if peak == 0.0:
        return phi
    levels = 2 ** bits - 1
    steps = np.floor(phi.rows * (levels / peak) + 0.5)
    return SamplingMatrix(steps * peak / levels, lifted=phi.lifted, provenance=phi.provenance,
                          seed=phi.seed, source_checksum=phi.source_checksum, quant_bits=bits)


def equivalent_matrix(phi: Union[SamplingMatrix, np.ndarray], dictionary: DictionaryLike) -> np.ndarray:
    """等效感知矩阵 D = ΦΨ"""
    rows = phi.rows if isinstance(phi, SamplingMatrix) else np.asarray(phi, dtype=np.float64)
    atoms = _atoms(dictionary)
    if rows.shape[1] != atoms.shape[0]:
        raise ArgumentError(f"采样矩阵列数 {rows.shape[1]} 与字典行数 {atoms.shape[0]} 不符")
    return rows @ atoms


@dataclass(frozen=True)
class CoherenceCheck:
    """OMP 精确恢复条件 μ(D) < 1/(2k-1) 的检查结果"""
    mu: float
    bound: float
    holds: bool


def coherence_bound_check(d: np.ndarray, k: int) -> CoherenceCheck:
    if k < 1:
        raise ArgumentError(f"稀疏度必须至少为 1: {k}")
    mu = mutual_coherence(d)
    bound = 1.0 / (2 * k - 1)
    return CoherenceCheck(mu=mu, bound=bound, holds=mu < bound)


@dataclass(frozen=True)
class CoherenceProfile:
    """抬升前后等效矩阵的互相干度"""
    unlifted: float
    lifted: float
    lifted_tail: float                           # 去掉第一列后的 μ


def coherence_profile(unlifted: SamplingMatrix, lifted: SamplingMatrix,
                      dictionary: DictionaryLike) -> CoherenceProfile:
    d_lifted = equivalent_matrix(lifted, dictionary)
    return CoherenceProfile(
        unlifted=mutual_coherence(equivalent_matrix(unlifted, dictionary)),
        lifted=mutual_coherence(d_lifted),
        lifted_tail=mutual_coherence(d_lifted[:, 1:]),
    )


def frobenius_objective(state: FieldOptState, rows: np.ndarray) -> float:
    """替代目标 ||Λ² - Σ w_i w_iᵀ||_F²，其中 W = Λ Vᵀ Φᵀ"""
    rows = np.asarray(rows, dtype=np.float64)
    w = state.eigvals[:, None] * (state.eigvecs.T @ rows.T)
    return float(np.sum((np.diag(state.eigvals ** 2) - w @ w.T) ** 2))


def random_orthonormal_rows(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """行正交归一的随机 M x N 矩阵"""
    if not 1 <= m <= n:
        raise ArgumentError(f"需要 1 <= M <= N，得到 {m}x{n}")
    q, r = np.linalg.qr(rng.standard_normal((n, m)))
    return (q * np.sign(np.diag(r))).T
