"""
光场优化、抬升、高斯基线与量化测试
"""
import numpy as np
import pytest

from field_factory.core.config import Provenance
from field_factory.core.errors import (ArgumentError, ConsistencyError, DegenerateMatrixError,
                                       NegativityError, RankError)
from field_factory.sensing.fieldopt import (SamplingMatrix, build_state, coherence_bound_check,
                                            coherence_profile, equivalent_matrix, extend_sampling,
                                            frobenius_objective, gaussian_sampling, lift_constant,
                                            nn_lift, optimize_sampling, quantize_matrix,
                                            random_orthonormal_rows)
from field_factory.sensing.metrics import mutual_coherence
from tests.conftest import constrained_atoms


class TestBuildState:
    """ΨΨᵀ 特征分解"""

    def test_identity(self):
        state = build_state(np.eye(3))
        np.testing.assert_allclose(state.eigvals, np.ones(3))
        assert state.rank == 3
        np.testing.assert_allclose(state.eigvecs @ state.eigvecs.T, np.eye(3), atol=1e-12)

    def test_diagonal(self):
        state = build_state(np.diag([2.0, 1.0]))
        np.testing.assert_allclose(state.eigvals, [4.0, 1.0])
        np.testing.assert_allclose(state.eigvecs, np.eye(2), atol=1e-12)

    def test_properties(self, small_dictionary):
        state = build_state(small_dictionary)
        gram = small_dictionary.atoms @ small_dictionary.atoms.T
        rebuilt = state.eigvecs @ np.diag(state.eigvals) @ state.eigvecs.T
        assert np.linalg.norm(rebuilt - gram) / np.linalg.norm(gram) <= 1e-8
        assert np.all(np.diff(state.eigvals) <= 0)
        assert state.rank == 16
        assert state.lift_constant == pytest.approx(max(0.0, -state.eigvecs[:, :state.rank].min()))
        assert state.lift_constant <= 1.0
        peaks = np.argmax(np.abs(state.eigvecs), axis=0)
        assert np.all(state.eigvecs[peaks, np.arange(16)] > 0)
        assert state.dictionary_checksum == small_dictionary.checksum

    def test_rank_deficient(self):
        atoms = np.zeros((4, 4))
        atoms[0, 0] = atoms[1, 1] = 1.0
        state = build_state(atoms)
        assert state.rank == 2
        with pytest.raises(RankError):
            optimize_sampling(state, 3)

    def test_zero_dictionary(self):
        with pytest.raises(DegenerateMatrixError):
            build_state(np.zeros((3, 3)))


class TestOptimizeSampling:
    """闭式最优采样矩阵与逐次采样"""

    def test_identity_rows(self):
        phi = optimize_sampling(build_state(np.eye(3)), 2)
        assert phi.shape == (2, 3)
        assert not phi.lifted and phi.provenance == Provenance.OPTIMIZED
        np.testing.assert_allclose(phi.rows @ phi.rows.T, np.eye(2), atol=1e-9)

    def test_orthonormal_rows(self, small_dictionary):
        phi = optimize_sampling(build_state(small_dictionary), 6)
        np.testing.assert_allclose(phi.rows @ phi.rows.T, np.eye(6), atol=1e-9)

    def test_bad_row_count(self, small_dictionary):
        with pytest.raises(ArgumentError):
            optimize_sampling(build_state(small_dictionary), 0)

    def test_optimality_certificate(self, rng):
        atoms = rng.standard_normal((8, 12))
        state = build_state(atoms)
        m = 4
        phi = optimize_sampling(state, m)
        expected = float(np.sum(state.eigvals[m:] ** 4))
        assert frobenius_objective(state, phi.rows) == pytest.approx(expected, rel=1e-6, abs=1e-9)
        candidates = [frobenius_objective(state, random_orthonormal_rows(m, 8, rng)) for _ in range(1000)]
        assert min(candidates) >= expected * (1 - 1e-9)

    def test_full_rank_objective_is_zero(self, small_dictionary):
        state = build_state(small_dictionary)
        phi = optimize_sampling(state, state.rank)
        scale = float(np.sum(state.eigvals ** 4))
        assert frobenius_objective(state, phi.rows) <= 1e-9 * scale

    def test_prefix_property(self, small_dictionary):
        state = build_state(small_dictionary)
        full = optimize_sampling(state, 12)
        for m in (2, 5, 8):
            np.testing.assert_array_equal(optimize_sampling(state, m).rows, full.rows[:m])

    def test_extend_is_bit_identical(self, small_dictionary):
        state = build_state(small_dictionary)
        stage = optimize_sampling(state, 3)
        for m in (3, 6, 10):
            stage = extend_sampling(state, stage, m)
            np.testing.assert_array_equal(stage.rows, optimize_sampling(state, m).rows)

    def test_extend_checks_source(self, small_dictionary):
        state = build_state(small_dictionary)
        other = build_state(constrained_atoms(16, 32, seed=99))
        with pytest.raises(ConsistencyError):
            extend_sampling(other, optimize_sampling(state, 3), 5)
        with pytest.raises(ConsistencyError):
            extend_sampling(state, gaussian_sampling(3, 16, seed=1), 5)
        with pytest.raises(ConsistencyError):
            extend_sampling(state, nn_lift(optimize_sampling(state, 3), state.lift_constant), 5)
        with pytest.raises(RankError):
            extend_sampling(state, optimize_sampling(state, 3), 17)


class TestLift:
    """非负抬升"""

    def test_non_negative_is_unchanged(self):
        phi = SamplingMatrix(np.array([[0.0, 1.0], [2.0, 3.0]]))
        lifted = nn_lift(phi, lift_constant(phi.rows))
        np.testing.assert_array_equal(lifted.rows, phi.rows)
        assert lifted.lifted

    def test_min_becomes_zero(self):
        phi = SamplingMatrix(np.array([[-0.3, 0.2], [0.1, 0.5]]))
        lifted = nn_lift(phi, 0.3)
        assert lifted.rows.min() == pytest.approx(0.0)

    def test_constant_too_small(self):
        with pytest.raises(NegativityError):
            nn_lift(SamplingMatrix(np.array([[-0.3, 0.2]])), 0.1)

    def test_only_first_column_changes(self, small_dictionary):
        state = build_state(small_dictionary)
        phi = optimize_sampling(state, 5)
        c = state.lift_constant
        diff = equivalent_matrix(nn_lift(phi, c), small_dictionary) - equivalent_matrix(phi, small_dictionary)
        assert np.max(np.abs(diff[:, 1:])) <= 1e-10
        # 第一列的偏移为 c·1ᵀψ₁ = c·N·N^(-1/2) = c·√N
        np.testing.assert_allclose(diff[:, 0], c * np.sqrt(16), atol=1e-10)

    def test_global_constant_covers_all_stages(self, small_dictionary):
        state = build_state(small_dictionary)
        for m in (1, 4, state.rank):
            assert nn_lift(optimize_sampling(state, m), state.lift_constant).rows.min() >= 0.0


class TestGaussian:
    """高斯基线"""

    def test_reproducible(self):
        a = gaussian_sampling(5, 7, seed=3)
        b = gaussian_sampling(5, 7, seed=3)
        np.testing.assert_array_equal(a.rows, b.rows)
        assert a.seed == 3 and a.provenance == Provenance.GAUSSIAN
        assert not np.array_equal(a.rows, gaussian_sampling(5, 7, seed=4).rows)

    def test_moments(self):
        rows = gaussian_sampling(1000, 1000, seed=0).rows
        assert -0.01 < rows.mean() < 0.01
        assert 0.99 < rows.var() < 1.01

    def test_lift(self):
        phi = gaussian_sampling(6, 9, seed=2)
        lifted = nn_lift(phi, lift_constant(phi.rows))
        assert lifted.rows.min() >= 0.0
        assert lifted.seed == 2

    def test_prefix_keeps_seed(self):
        phi = gaussian_sampling(6, 9, seed=2).prefix(3)
        assert phi.n_rows == 3 and phi.seed == 2

    def test_bad_size(self):
        with pytest.raises(ArgumentError):
            gaussian_sampling(0, 4, seed=1)


class TestQuantize:
    """量化"""

    def test_exact_levels_unchanged(self):
        phi = SamplingMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]), lifted=True)
        np.testing.assert_array_equal(quantize_matrix(phi, 8).rows, phi.rows)

    def test_half_rounds_up(self):
        phi = SamplingMatrix(np.array([[0.5, 1.0]]), lifted=True)
        np.testing.assert_array_equal(quantize_matrix(phi, 1).rows, [[1.0, 1.0]])

    @pytest.mark.parametrize("bits", [1, 3, 8, 12])
    def test_error_bound_and_idempotent(self, rng, bits):
        phi = SamplingMatrix(rng.random((20, 30)) * 3.0, lifted=True)
        q = quantize_matrix(phi, bits)
        peak = phi.rows.max()
        assert np.max(np.abs(q.rows - phi.rows)) <= peak / (2 * (2 ** bits - 1)) + 1e-12
        assert q.quant_bits == bits
        np.testing.assert_allclose(quantize_matrix(q, bits).rows, q.rows, atol=1e-12)

    def test_zero_matrix(self):
        phi = SamplingMatrix(np.zeros((2, 2)), lifted=True)
        assert quantize_matrix(phi, 8) is phi

    def test_rejects_negative(self):
        with pytest.raises(NegativityError):
            quantize_matrix(SamplingMatrix(np.array([[-1.0, 1.0]])), 8)

    @pytest.mark.parametrize("bits", [0, 17])
    def test_bad_bits(self, bits):
        with pytest.raises(ArgumentError):
            quantize_matrix(SamplingMatrix(np.ones((2, 2)), lifted=True), bits)


class TestCoherence:
    """互相干度检查"""

    def test_identity(self):
        check = coherence_bound_check(np.eye(4), 3)
        assert check.mu == 0.0 and check.holds

    def test_parallel_columns(self):
        check = coherence_bound_check(np.array([[1.0, 2.0], [0.0, 0.0]]), 1)
        assert check.mu == pytest.approx(1.0)
        assert not check.holds

    def test_known_value(self):
        d = np.array([[1.0, 1.0], [0.0, 1.0]]) / np.array([1.0, np.sqrt(2.0)])
        assert coherence_bound_check(d, 1).mu == pytest.approx(2 ** -0.5)

    def test_profile(self, small_dictionary):
        state = build_state(small_dictionary)
        phi = optimize_sampling(state, 8)
        profile = coherence_profile(phi, nn_lift(phi, state.lift_constant), small_dictionary)
        assert 0.0 <= profile.lifted_tail <= profile.lifted <= 1.0
        assert 0.0 <= profile.unlifted <= 1.0


def test_save_and_load(tmp_path, small_dictionary):
    state = build_state(small_dictionary)
    phi = nn_lift(optimize_sampling(state, 4), state.lift_constant)
    path = tmp_path / "phi.gimat"
    phi.save(path)
    loaded = SamplingMatrix.load(path)
    np.testing.assert_array_equal(loaded.rows, phi.rows)
    assert loaded.lifted and loaded.provenance == Provenance.OPTIMIZED
    assert loaded.source_checksum == small_dictionary.checksum


def _random_states(count: int, n: int = 64, k: int = 128):
    for seed in range(count):
        atoms = constrained_atoms(n, k, seed=100 + seed)
        yield atoms, build_state(atoms)


class TestRandomDictionaries:
    """随机受约束字典上的性质"""

    def test_closed_form_beats_random_candidates(self):
        rng = np.random.default_rng(2024)
        for atoms, state in _random_states(20):
            m = int(rng.integers(4, 33))
            expected = float(np.sum(state.eigvals[m:] ** 4))
            achieved = frobenius_objective(state, optimize_sampling(state, m).rows)
            assert achieved == pytest.approx(expected, rel=1e-6)
            best = min(frobenius_objective(state, random_orthonormal_rows(m, 64, rng)) for _ in range(1000))
            assert best >= expected * (1 - 1e-9)

    def test_extend_matches_direct_optimization(self):
        rng = np.random.default_rng(7)
        states = [state for _, state in _random_states(5)]
        for i in range(50):
            state = states[i % len(states)]
            m = int(rng.integers(1, state.rank))
            m_new = int(rng.integers(m + 1, state.rank + 1))
            base = optimize_sampling(state, m)
            extended = extend_sampling(state, base, m_new)
            assert extended.n_rows == m_new
            np.testing.assert_array_equal(extended.rows[:m], base.rows)
            np.testing.assert_array_equal(extended.rows, optimize_sampling(state, m_new).rows)

    def test_lift_changes_only_first_column(self):
        rng = np.random.default_rng(11)
        for atoms, state in _random_states(20):
            phi = optimize_sampling(state, int(rng.integers(1, state.rank + 1)))
            c = state.lift_constant
            diff = equivalent_matrix(nn_lift(phi, c), atoms) - equivalent_matrix(phi, atoms)
            assert np.max(np.abs(diff[:, 1:])) <= 1e-10
            np.testing.assert_allclose(diff[:, 0], c * np.sqrt(64), atol=1e-10)

    def test_tail_coherence_unchanged_by_lift(self):
        rng = np.random.default_rng(5)
        for atoms, state in _random_states(3, n=16, k=32):
            m = int(rng.integers(4, state.rank + 1))
            phi = optimize_sampling(state, m)
            profile = coherence_profile(phi, nn_lift(phi, state.lift_constant), atoms)
            unlifted = equivalent_matrix(phi, atoms)
            assert profile.lifted_tail == pytest.approx(mutual_coherence(unlifted[:, 1:]), abs=1e-9)
            gaussian = gaussian_sampling(m, 16, seed=int(rng.integers(1000)))
            profile = coherence_profile(gaussian, nn_lift(gaussian, lift_constant(gaussian.rows)), atoms)
            assert profile.lifted_tail == pytest.approx(
                mutual_coherence(equivalent_matrix(gaussian, atoms)[:, 1:]), abs=1e-9)

    def test_full_sampling_preserves_atom_coherence(self):
        for atoms, state in _random_states(3, n=16, k=32):
            phi = optimize_sampling(state, state.rank)
            profile = coherence_profile(phi, nn_lift(phi, state.lift_constant), atoms)
            assert profile.lifted_tail == pytest.approx(mutual_coherence(atoms[:, 1:]), abs=1e-9)
