"""
数据集读取（MNIST IDX）、图像/向量转换、数据划分与矩阵文件读写
"""
import gzip
import hashlib
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from ..core.config import MatrixRole
from ..core.errors import ArgumentError, CorruptionError, FieldIOError, FormatError

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
MATRIX_MAGIC = b"GIMATRX1"

_IDX_HEADER = struct.Struct(">IIII")
_MATRIX_HEADER = struct.Struct("<QQ")
_META_LENGTH = struct.Struct("<I")

PathLike = Union[str, Path]


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ImageVector:
    """按行展开的灰度图像，像素范围名义上为 [0, 255]"""
    pixels: np.ndarray
    height: int
    width: int

    def __post_init__(self) -> None:
        pixels = np.array(self.pixels, dtype=np.float64).reshape(-1)
        if pixels.size != self.height * self.width:
            raise ArgumentError(
                f"像素数 {pixels.size} 与尺寸 {self.height}x{self.width} 不符")
        if not np.all(np.isfinite(pixels)):
            raise ArgumentError("图像包含非有限值")
        object.__setattr__(self, "pixels", _readonly(pixels))

    @property
    def size(self) -> int:
        return self.height * self.width

    def as_image(self) -> np.ndarray:
        return self.pixels.reshape(self.height, self.width)


@dataclass(frozen=True, eq=False)
class Dataset:
    """有序图像集合，每行一幅图像"""
    pixels: np.ndarray                           # (count, N)
    height: int
    width: int
    split: str = "train"
    source: str = ""                             # 文件路径
    checksum: str = ""                           # 源文件 sha256
    indices: np.ndarray = field(default=None)    # 在源文件中的序号

    def __post_init__(self) -> None:
        pixels = np.array(self.pixels, dtype=np.float64)
        if pixels.ndim != 2 or pixels.shape[1] != self.height * self.width:
            raise ArgumentError(f"数据集形状 {pixels.shape} 与图像尺寸不符")
        object.__setattr__(self, "pixels", _readonly(pixels))
        indices = np.arange(len(pixels)) if self.indices is None else np.array(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", _readonly(indices))

    def __len__(self) -> int:
        return self.pixels.shape[0]

    def __getitem__(self, i: int) -> ImageVector:
        return ImageVector(self.pixels[i], self.height, self.width)

    def __iter__(self) -> Iterator[ImageVector]:
        for i in range(len(self)):
            yield self[i]

    @property
    def n_pixels(self) -> int:
        return self.height * self.width

    def as_columns(self) -> np.ndarray:
        """N x L 训练矩阵，每列一幅图像"""
        return np.ascontiguousarray(self.pixels.T)

    def take(self, positions: np.ndarray, split: Optional[str] = None) -> "Dataset":
        positions = np.asarray(positions, dtype=np.int64)
        return Dataset(
            pixels=self.pixels[positions],
            height=self.height,
            width=self.width,
            split=split or self.split,
            source=self.source,
            checksum=self.checksum,
            indices=self.indices[positions],
        )


def _read_bytes(path: PathLike) -> bytes:
    if not str(path):
        raise FieldIOError("文件路径为空")
    path = Path(path)
    try:
        if path.suffix == ".gz":
            with gzip.open(path, "rb") as f:
                return f.read()
        return path.read_bytes()
    except (OSError, EOFError) as e:
        raise FieldIOError(f"读取文件失败 {path}: {e}")


def load_idx_images(path: PathLike, limit: Optional[int] = None, split: str = "train") -> Dataset:
    """读取 IDX 图像文件（大端魔数 0x00000803），可选只取前 limit 幅"""
    if limit is not None and limit < 1:
        raise ArgumentError(f"limit 必须为正: {limit}")

    raw = _read_bytes(path)
    if len(raw) < _IDX_HEADER.size:
        raise CorruptionError(f"IDX 文件头不完整: {path}")

    magic, count, rows, cols = _IDX_HEADER.unpack_from(raw)
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(f"IDX 魔数错误: 0x{magic:08x}，期望 0x{IDX_IMAGE_MAGIC:08x}")

    payload = memoryview(raw)[_IDX_HEADER.size:]
    declared = count * rows * cols
    if len(payload) < declared:
        raise CorruptionError(f"IDX 数据被截断: 声明 {declared} 字节，实际 {len(payload)} 字节")

    n = count if limit is None else min(count, limit)
    pixels = np.frombuffer(payload, dtype=np.uint8, count=n * rows * cols)
    dataset = Dataset(
        pixels=pixels.reshape(n, rows * cols).astype(np.float64),
        height=rows,
        width=cols,
        split=split,
        source=str(path),
        checksum=hashlib.sha256(raw).hexdigest(),
    )
    logger.info("读取 %d 幅 %dx%d 图像: %s", n, rows, cols, path)
    return dataset


def write_idx_images(path: PathLike, images: np.ndarray) -> None:
    """把 (count, rows, cols) 的 uint8 数组写成 IDX 图像文件"""
    images = np.asarray(images)
    if images.ndim != 3:
        raise ArgumentError(f"图像数组必须是三维的，得到 {images.shape}")
    if images.size and (images.min() < 0 or images.max() > 255):
        raise ArgumentError("IDX 像素必须在 [0, 255] 内")
    blob = _IDX_HEADER.pack(IDX_IMAGE_MAGIC, *images.shape) + images.astype(np.uint8).tobytes()
    path = Path(path)
    try:
        if path.suffix == ".gz":
            with gzip.open(path, "wb") as f:
                f.write(blob)
        else:
            path.write_bytes(blob)
    except OSError as e:
        raise FieldIOError(f"写入文件失败 {path}: {e}")


def split_dataset(ds: Dataset, count: int, seed: int) -> Tuple[Dataset, Dataset]:
    """随机选出 count 幅图像，其余按原顺序返回"""
    if count < 1 or count > len(ds):
        raise ArgumentError(f"子集大小 {count} 超出数据集大小 {len(ds)}")
    order = np.random.default_rng(seed).permutation(len(ds))
    return ds.take(order[:count]), ds.take(np.sort(order[count:]))


def random_subset(ds: Dataset, count: int, seed: int) -> Dataset:
    """随机选出 count 幅不重复的图像，相同种子得到相同结果"""
    return split_dataset(ds, count, seed)[0]


class MatrixMeta(BaseModel):
    """矩阵文件元数据"""
    model_config = ConfigDict(extra="allow")

    role: Optional[MatrixRole] = None
    seed: Optional[int] = None
    provenance: Optional[str] = None


@dataclass(frozen=True, eq=False)
class MatrixFile:
    """矩阵文件内容"""
    matrix: np.ndarray
    meta: Optional[MatrixMeta] = None


def matrix_checksum(matrix: np.ndarray) -> str:
    """按小端 float64 字节计算 sha256"""
    arr = np.ascontiguousarray(matrix, dtype="<f8")
    digest = hashlib.sha256(repr(arr.shape).encode("ascii"))
    digest.update(arr.tobytes())
    return digest.hexdigest()


def write_matrix(matrix: np.ndarray, path: PathLike,
                 meta: Union[MatrixMeta, Dict[str, Any], None] = None) -> None:
    """写入矩阵文件：魔数 + 行列数(u64) + 行优先 float64 + 可选元数据"""
    if not str(path):
        raise FieldIOError("文件路径为空")
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2:
        raise ArgumentError(f"只能保存二维矩阵，得到 {arr.ndim} 维")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError("矩阵包含非有限值")

    blob = bytearray(MATRIX_MAGIC)
    blob += _MATRIX_HEADER.pack(*arr.shape)
    blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    if meta is not None:
        if isinstance(meta, dict):
            meta = MatrixMeta(**meta)
        text = meta.model_dump_json(exclude_none=True).encode("utf-8")
        blob += _META_LENGTH.pack(len(text)) + text

    try:
        Path(path).write_bytes(bytes(blob))
    except OSError as e:
        raise FieldIOError(f"写入矩阵失败 {path}: {e}")


def read_matrix_file(path: PathLike) -> MatrixFile:
    """读取矩阵文件及元数据"""
    raw = _read_bytes(path)
    header = len(MATRIX_MAGIC) + _MATRIX_HEADER.size
    if len(raw) < header:
        raise CorruptionError(f"矩阵文件头不完整: {path}")
    if raw[:len(MATRIX_MAGIC)] != MATRIX_MAGIC:
        raise FormatError(f"矩阵文件魔数错误: {raw[:len(MATRIX_MAGIC)]!r}")

    rows, cols = _MATRIX_HEADER.unpack_from(raw, len(MATRIX_MAGIC))
    end = header + rows * cols * 8
    if len(raw) < end:
        raise CorruptionError(f"矩阵数据长度不足: 声明 {rows}x{cols}")
    matrix = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=header)
    matrix = matrix.reshape(rows, cols).astype(np.float64)

    meta = None
    tail = raw[end:]
    if tail:
        if len(tail) < _META_LENGTH.size:
            raise CorruptionError("元数据长度字段不完整")
        (length,) = _META_LENGTH.unpack_from(tail)
        if len(tail) != _META_LENGTH.size + length:
            raise CorruptionError("元数据长度与声明不符")
        try:
            meta = MatrixMeta.model_validate_json(tail[_META_LENGTH.size:].decode("utf-8"))
        except (UnicodeDecodeError, ValidationError) as e:
            raise CorruptionError(f"元数据无法解析: {e}")
    return MatrixFile(matrix=matrix, meta=meta)


def read_matrix(path: PathLike) -> np.ndarray:
    return read_matrix_file(path).matrix
