"""
重建质量指标测试
"""
import math

import numpy as np
import pytest

from field_factory.core.errors import ArgumentError, DegenerateMatrixError
from field_factory.sensing.data import ImageVector
from field_factory.sensing.metrics import (ImageQuality, aggregate, evaluate, mse, mutual_coherence, psnr,
                                           ssim)


def test_psnr_extremes():
    assert psnr(np.zeros(784), np.full(784, 255.0)) == pytest.approx(0.0)
    assert psnr(np.ones(10), np.ones(10)) == math.inf


def test_psnr_single_pixel_off():
    x = np.zeros(784)
    y = x.copy()
    y[100] = 1.0
    assert psnr(x, y) == pytest.approx(10 * math.log10(65025 * 784), abs=1e-9)
    assert psnr(x, y) == pytest.approx(77.07, abs=0.01)


def test_ssim_identical_and_range(rng):
    x = rng.random(64) * 255
    assert ssim(x, x) == pytest.approx(1.0)
    value = ssim(x, rng.random(64) * 255)
    assert -1.0 <= value <= 1.0
    assert ssim(x, 255 - x) < 0


def test_mse_non_negative(rng):
    assert mse(rng.random(9), rng.random(9)) >= 0.0


def test_shape_mismatch():
    with pytest.raises(ArgumentError):
        mse(np.zeros(4), np.zeros(5))
    with pytest.raises(ArgumentError):
        mse(ImageVector(np.zeros(4), 2, 2), ImageVector(np.zeros(4), 4, 1))


def test_bad_dynamic_range():
    with pytest.raises(ArgumentError):
        psnr(np.zeros(2), np.ones(2), dynamic_range=0)


def test_mutual_coherence():
    assert mutual_coherence(np.eye(3)) == 0.0
    with pytest.raises(DegenerateMatrixError):
        mutual_coherence(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ArgumentError):
        mutual_coherence(np.ones((3, 1)))


def test_aggregate_excludes_infinite_psnr():
    reports = [ImageQuality(0.0, math.inf, 1.0), ImageQuality(1.0, 48.0, 0.9), ImageQuality(4.0, 42.0, 0.7)]
    summary = aggregate(reports)
    assert summary.count == 3
    assert summary.n_exact == 1
    assert summary.psnr_mean == pytest.approx(45.0)
    assert summary.psnr_std == pytest.approx(3.0)
    assert summary.ssim_mean == pytest.approx((1.0 + 0.9 + 0.7) / 3)
    assert summary.mse_mean == pytest.approx(5.0 / 3)


def test_aggregate_counts(rng):
    reports = [evaluate(rng.random(16) * 255, rng.random(16) * 255) for _ in range(500)]
    assert aggregate(reports).count == 500
    with pytest.raises(ArgumentError):
        aggregate([])
