"""
测试公共夹具：合成 IDX 数据、受约束随机字典、小规模实验配置
"""
import os
from pathlib import Path

import numpy as np
import pytest

from field_factory.sensing.data import write_idx_images
from field_factory.sensing.dictionary import Dictionary, constant_atom, project_atom


def constrained_atoms(n: int, k: int, seed: int = 0) -> np.ndarray:
    """首列为常数、其余列零均值单位范数的随机 N x K 矩阵"""
    rng = np.random.default_rng(seed)
    atoms = np.empty((n, k))
    atoms[:, 0] = constant_atom(n)
    for j in range(1, k):
        atoms[:, j] = project_atom(rng.standard_normal(n))
    return atoms


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_dictionary() -> Dictionary:
    return Dictionary(constrained_atoms(16, 32, seed=7), sparsity=3, height=4, width=4)


@pytest.fixture
def idx_images() -> np.ndarray:
    return np.random.default_rng(42).integers(0, 256, size=(60, 4, 4), dtype=np.uint8)


@pytest.fixture
def idx_file(tmp_path: Path, idx_images: np.ndarray) -> Path:
    path = tmp_path / "train-images-idx3-ubyte"
    write_idx_images(path, idx_images)
    return path


@pytest.fixture
def config_file(tmp_path: Path, idx_file: Path):
    """写出小规模实验配置的工厂函数"""

    def write(extra: str = "", name: str = "experiment.ini") -> Path:
        text = f"""
[experiment]
seed = 3
threads = 1

[data]
train_path = {idx_file}
train_count = 40
test_count = 5

[dictionary]
n_atoms = 32
sparsity = 3
iterations = 2
progress = false

[fields]
sr_grid = 0.25, 0.5
gaussian_seeds = 2

[output]
out_dir = {tmp_path / "out"}
record_timings = false
{extra}
"""
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return write


@pytest.fixture(scope="session")
def mnist_dir() -> Path:
    """MNIST 验收测试的数据目录，未设置 GI_MNIST_DIR 时跳过"""
    value = os.environ.get("GI_MNIST_DIR")
    if not value or not Path(value).is_dir():
        pytest.skip("未设置 GI_MNIST_DIR")
    return Path(value)
