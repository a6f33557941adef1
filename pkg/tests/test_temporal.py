"""
時間差分演算子のテスト

テスト対象: 前進差分行列、平滑化逆行列、クロネッカー積の暗黙適用、平滑エネルギー
"""
import numpy as np
import pytest

from app.core.exceptions import InvalidAlphaError, InvalidDimensionError, ShapeMismatchError
from app.solvers.temporal import (
    apply_difference,
    apply_smoothing_inverse,
    inverse_computation_count,
    make_diff_operator,
    smoothness_energy,
)


class TestMakeDiffOperator:
    """演算子構築のテスト"""

    def test_difference_matrix_structure(self):
        op = make_diff_operator(3, 1.0)
        np.testing.assert_array_equal(op.D, [[-1, 1, 0], [0, -1, 1], [0, 0, 0]])

    def test_two_step_inverse(self):
        op = make_diff_operator(2, 1.0)
        np.testing.assert_allclose(
            op.smoothing_inverse, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], atol=1e-12
        )

    @pytest.mark.parametrize("T", [2, 5, 17])
    def test_zero_alpha_is_identity(self, T):
        op = make_diff_operator(T, 0.0)
        np.testing.assert_array_equal(op.smoothing_inverse, np.eye(T))

    @pytest.mark.parametrize("alpha", [0.1, 0.5, 3.0, 100.0])
    def test_inverse_property(self, alpha):
        op = make_diff_operator(12, alpha)
        system = np.eye(12) + alpha * op.D.T @ op.D
        np.testing.assert_allclose(op.smoothing_inverse @ system, np.eye(12), atol=1e-10)
        np.testing.assert_array_equal(op.smoothing_inverse, op.smoothing_inverse.T)
        assert np.linalg.norm(op.smoothing_inverse, 2) <= 1.0 + 1e-12

    @pytest.mark.parametrize("T", [2, 3, 8, 48])
    @pytest.mark.parametrize("alpha", [0.0, 0.01, 0.5, 10.0, 1000.0])
    def test_smoothing_inverse_is_symmetric_contraction(self, T, alpha):
        """S は対称・半正定値で作用素ノルム ≤ 1"""
        S = make_diff_operator(T, alpha).smoothing_inverse
        np.testing.assert_array_equal(S, S.T)
        eigenvalues = np.linalg.eigvalsh(S)
        assert eigenvalues.min() >= -1e-12
        assert eigenvalues.max() <= 1.0 + 1e-12
        assert np.linalg.norm(S, 2) <= 1.0 + 1e-12

    def test_arrays_read_only(self):
        op = make_diff_operator(4, 0.5)
        with pytest.raises(ValueError):
            op.smoothing_inverse[0, 0] = 2.0

    def test_counts_inverse_computations(self):
        make_diff_operator(4, 0.5)
        make_diff_operator(6, 1.0)
        assert inverse_computation_count() == 2

    def test_short_series_rejected(self):
        with pytest.raises(InvalidDimensionError):
            make_diff_operator(1, 0.5)

    @pytest.mark.parametrize("alpha", [-0.1, float("nan"), float("inf")])
    def test_invalid_alpha_rejected(self, alpha):
        with pytest.raises(InvalidAlphaError):
            make_diff_operator(4, alpha)


class TestApplySmoothingInverse:
    """平滑化逆行列の適用テスト"""

    def test_zero_alpha_returns_input(self, rng):
        op = make_diff_operator(5, 0.0)
        X = rng.normal(size=(10, 7))
        np.testing.assert_array_equal(apply_smoothing_inverse(op, X), X)

    def test_single_channel_is_plain_multiply(self, rng):
        op = make_diff_operator(6, 2.0)
        X = rng.normal(size=(6, 4))
        np.testing.assert_allclose(
            apply_smoothing_inverse(op, X), op.smoothing_inverse @ X, atol=1e-12
        )

    @pytest.mark.parametrize("T", [4, 6])
    def test_matches_dense_kronecker(self, rng, T):
        C = 3
        op = make_diff_operator(T, 0.7)
        X = rng.normal(size=(C * T, 11))
        dense = np.kron(op.smoothing_inverse, np.eye(C))
        np.testing.assert_allclose(apply_smoothing_inverse(op, X), dense @ X, atol=1e-10)

    def test_difference_matches_dense_kronecker(self, rng):
        C, T = 2, 5
        op = make_diff_operator(T, 1.0)
        X = rng.normal(size=(C * T, 3))
        delta = np.kron(op.D, np.eye(C))
        np.testing.assert_allclose(apply_difference(op, X), delta @ X, atol=1e-12)
        np.testing.assert_allclose(
            apply_difference(op, X, transpose=True), delta.T @ X, atol=1e-12
        )

    def test_row_count_must_divide(self, rng):
        op = make_diff_operator(4, 1.0)
        with pytest.raises(ShapeMismatchError):
            apply_smoothing_inverse(op, rng.normal(size=(10, 2)))


class TestSmoothnessEnergy:
    """平滑エネルギー恒等式のテスト"""

    def test_energy_identity(self, rng):
        T, C, n = 7, 3, 5
        op = make_diff_operator(T, 1.0)
        X = rng.normal(size=(T * C, n))
        blocks = X.reshape(T, C, n)
        expected = sum(np.sum((blocks[t + 1] - blocks[t]) ** 2) for t in range(T - 1))
        assert smoothness_energy(op, X) == pytest.approx(expected, rel=1e-10)

    def test_constant_in_time_has_zero_energy(self):
        op = make_diff_operator(4, 1.0)
        X = np.tile(np.array([[0.2, 0.4], [0.6, 0.8]]), (4, 1))
        assert smoothness_energy(op, X) == 0.0
