"""
減衰補間ソルバーのテスト

テスト対象: 線形補間オラクル、目的関数、固定点反復の単調性・停留性・α→0極限
"""
import time

import numpy as np
import pytest

from app.core.exceptions import InvalidAlphaError, ShapeMismatchError
from app.core.settings import DampedConfig
from app.solvers.damped import (
    auxiliary_objective,
    count_empty_series,
    damped_interpolate,
    damped_step,
    linear_interp_oracle,
    objective_F,
)
from app.solvers.temporal import inverse_computation_count, make_diff_operator
from app.synth.generator import synth_cloud_blobs


def _series(T, observations):
    """単一画素・単一チャネル系列の (Y, M)"""
    Y = np.zeros((T, 1))
    M = np.zeros((T, 1))
    for t, value in observations:
        Y[t, 0] = value
        M[t, 0] = 1.0
    return Y, M


def _random_problem(rng, T=8, C=2, n=10, observed=0.6):
    M = (rng.random((T * C, n)) < observed).astype(np.float64)
    Y = rng.uniform(0.0, 1.0, size=(T * C, n)) * M
    return Y, M


class TestLinearInterpOracle:
    """線形補間オラクルのテスト"""

    def test_midpoint(self):
        Y, M = _series(5, [(0, 0.0), (4, 1.0)])
        X = linear_interp_oracle(Y, M, time_steps=5)
        assert X[2, 0] == pytest.approx(0.5)

    def test_single_observation_is_constant(self):
        Y, M = _series(4, [(2, 0.7)])
        X = linear_interp_oracle(Y, M, time_steps=4)
        np.testing.assert_allclose(X[:, 0], 0.7)

    def test_interpolation_with_constant_extrapolation(self):
        Y, M = _series(5, [(1, 0.2), (3, 0.8)])
        X = linear_interp_oracle(Y, M, time_steps=5)
        np.testing.assert_allclose(X[:, 0], [0.2, 0.2, 0.5, 0.8, 0.8], atol=1e-12)

    def test_empty_series_is_zero(self):
        Y, M = _series(3, [])
        np.testing.assert_array_equal(linear_interp_oracle(Y, M, time_steps=3), 0.0)

    def test_channels_interpolate_independently(self):
        # T=3, C=2: チャネル0は t=0,2、チャネル1は t=1 のみ観測
        Y = np.array([[0.0], [0.0], [0.0], [0.4], [1.0], [0.0]])
        M = np.array([[1.0], [0.0], [0.0], [1.0], [1.0], [0.0]])
        X = linear_interp_oracle(Y, M, time_steps=3)
        np.testing.assert_allclose(X[:, 0], [0.0, 0.4, 0.5, 0.4, 1.0, 0.4])

    def test_observed_entries_kept(self, rng):
        Y, M = _random_problem(rng)
        X = linear_interp_oracle(Y, M, time_steps=8)
        np.testing.assert_array_equal(X[M == 1], Y[M == 1])


class TestObjective:
    """目的関数のテスト"""

    def test_hand_example(self):
        op = make_diff_operator(2, 1.0)
        Y = np.array([[0.0], [1.0]])
        M = np.ones((2, 1))
        assert objective_F(Y, Y, M, op) == pytest.approx(1.0)

    def test_fit_constant_in_time_is_zero(self):
        op = make_diff_operator(3, 2.0)
        Y = np.full((3, 4), 0.3)
        assert objective_F(Y, Y, np.ones_like(Y), op) == 0.0

    def test_unobserved_constant_is_zero(self):
        op = make_diff_operator(3, 2.0)
        X = np.full((3, 2), 0.9)
        assert objective_F(X, np.zeros_like(X), np.zeros_like(X), op) == 0.0

    def test_auxiliary_touches_objective(self, rng):
        op = make_diff_operator(8, 0.5)
        Y, M = _random_problem(rng)
        X = rng.normal(size=Y.shape)
        assert auxiliary_objective(X, X, Y, M, op) == pytest.approx(objective_F(X, Y, M, op))

    def test_shape_mismatch(self):
        op = make_diff_operator(2, 1.0)
        with pytest.raises(ShapeMismatchError):
            objective_F(np.zeros((2, 2)), np.zeros((2, 1)), np.ones((2, 1)), op)


class TestDampedInterpolate:
    """減衰補間のテスト"""

    def test_fully_observed_zero_alpha_returns_y(self, rng):
        Y = rng.uniform(size=(12, 5))
        M = np.ones_like(Y)
        X, trace = damped_interpolate(Y, M, DampedConfig(alpha=0.0), time_steps=4)
        np.testing.assert_array_equal(X, Y)
        assert trace.converged
        assert trace.iterations == 1

    def test_small_alpha_midpoint(self):
        Y, M = _series(3, [(0, 0.0), (2, 1.0)])
        X, _ = damped_interpolate(Y, M, DampedConfig(alpha=1e-6), time_steps=3)
        assert X[1, 0] == pytest.approx(0.5, abs=1e-3)

    def test_small_alpha_constant_extrapolation(self):
        Y, M = _series(5, [(1, 0.35)])
        X, _ = damped_interpolate(Y, M, DampedConfig(alpha=1e-6), time_steps=5)
        np.testing.assert_allclose(X[:, 0], 0.35, atol=1e-3)

    def test_small_alpha_matches_linear_on_single_pixels(self):
        rng = np.random.default_rng(2024)
        cfg = DampedConfig(alpha=1e-6)
        for _ in range(50):
            T = int(rng.integers(3, 12))
            Y, M = _random_problem(rng, T=T, C=1, n=1, observed=0.5)
            if not M.any():
                M[int(rng.integers(T)), 0] = 1.0
            X, _ = damped_interpolate(Y, M, cfg, time_steps=T)
            oracle = linear_interp_oracle(Y, M, time_steps=T)
            assert np.max(np.abs(X - oracle)) <= 1e-3

    def test_small_alpha_matches_linear_on_scene(self):
        rng = np.random.default_rng(7)
        T, C, H, W = 24, 2, 16, 16
        Y, M = _random_problem(rng, T=T, C=C, n=H * W, observed=0.5)
        X, _ = damped_interpolate(Y, M, DampedConfig(alpha=1e-6), time_steps=T)
        oracle = linear_interp_oracle(Y, M, time_steps=T)
        observed = M.reshape(T, -1).any(axis=0)
        diff = np.abs(X - oracle).reshape(T, -1)[:, observed]
        assert diff.max() <= 1e-3

    def test_monotone_descent(self):
        rng = np.random.default_rng(99)
        for _ in range(20):
            T = int(rng.integers(3, 10))
            alpha = float(rng.uniform(0.1, 5.0))
            Y, M = _random_problem(rng, T=T, C=2, n=6, observed=0.5)
            _, trace = damped_interpolate(Y, M, DampedConfig(alpha=alpha), time_steps=T)
            assert trace.is_monotone(rel_slack=0.0, abs_slack=1e-10)

    def test_converged_point_is_fixed_point(self, rng):
        Y, M = _random_problem(rng, T=6, C=2, n=5)
        op = make_diff_operator(6, 0.5)
        cfg = DampedConfig(alpha=0.5, rel_tol=1e-15, max_iters=5000)
        X, trace = damped_interpolate(Y, M, cfg, op=op)
        assert trace.iterations > 0
        np.testing.assert_allclose(damped_step(X, Y, M, op), X, atol=1e-6)

    def test_gradient_vanishes_at_solution(self, rng):
        """収束点で ∇F ≈ 0（中心差分で20座標を確認）"""
        Y, M = _random_problem(rng, T=5, C=1, n=4)
        op = make_diff_operator(5, 0.5)
        cfg = DampedConfig(alpha=0.5, rel_tol=1e-15, max_iters=20000)
        X, _ = damped_interpolate(Y, M, cfg, op=op)
        scale = objective_F(X, Y, M, op) + 1.0
        h = 1e-5
        for _ in range(20):
            i, j = int(rng.integers(X.shape[0])), int(rng.integers(X.shape[1]))
            step = np.zeros_like(X)
            step[i, j] = h
            grad = (objective_F(X + step, Y, M, op) - objective_F(X - step, Y, M, op)) / (2 * h)
            assert abs(grad) <= 1e-4 * scale

    def test_step_minimizes_auxiliary(self, rng):
        """damped_step は Q(·, X) の停留点"""
        Y, M = _random_problem(rng, T=6, C=2, n=3)
        op = make_diff_operator(6, 1.5)
        X = rng.uniform(size=Y.shape)
        X_next = damped_step(X, Y, M, op)
        h = 1e-4
        for _ in range(20):
            i, j = int(rng.integers(X.shape[0])), int(rng.integers(X.shape[1]))
            step = np.zeros_like(X)
            step[i, j] = h
            plus = auxiliary_objective(X_next + step, X, Y, M, op)
            minus = auxiliary_objective(X_next - step, X, Y, M, op)
            assert abs((plus - minus) / (2 * h)) <= 1e-6

    def test_empty_series_flagged(self):
        Y = np.zeros((4, 2))
        M = np.zeros((4, 2))
        Y[1, 0], M[1, 0] = 0.6, 1.0
        X, trace = damped_interpolate(Y, M, DampedConfig(alpha=0.5), time_steps=4)
        assert trace.empty_series == 1
        assert not trace.degenerate
        np.testing.assert_array_equal(X[:, 1], 0.0)
        np.testing.assert_allclose(X[:, 0], 0.6)

    def test_all_cloudy_is_degenerate(self):
        X, trace = damped_interpolate(
            np.zeros((6, 3)), np.zeros((6, 3)), DampedConfig(alpha=0.5), time_steps=3
        )
        assert trace.degenerate
        np.testing.assert_array_equal(X, 0.0)

    def test_row_selector_leaves_other_rows(self, rng):
        T, C = 4, 2
        Y, M = _random_problem(rng, T=T, C=C, n=5)
        selector = np.tile([True, False], T)
        X, _ = damped_interpolate(
            Y, M, DampedConfig(alpha=0.5), time_steps=T, row_selector=selector
        )
        np.testing.assert_array_equal(X[~selector], (M * Y)[~selector])
        full, _ = damped_interpolate(Y[selector], M[selector], DampedConfig(alpha=0.5), time_steps=T)
        np.testing.assert_allclose(X[selector], full, atol=1e-12)

    def test_inconsistent_row_selector(self, rng):
        Y, M = _random_problem(rng, T=2, C=2, n=3)
        with pytest.raises(ShapeMismatchError):
            damped_interpolate(
                Y, M, DampedConfig(), time_steps=2, row_selector=np.array([True, False, False, True])
            )

    def test_single_inverse_per_solve(self, rng):
        Y, M = _random_problem(rng)
        damped_interpolate(Y, M, DampedConfig(alpha=0.5), time_steps=8)
        assert inverse_computation_count() == 1

    @pytest.mark.slow
    def test_full_size_stack_converges(self, rng):
        """12バンド・48日・256×256のスタックが60秒未満・逆行列1回の計算で収束"""
        T, C, H, W = 48, 12, 256, 256
        clear = synth_cloud_blobs(seed=2, H=H, W=W, T=T, target_ratio=0.4)
        M = np.repeat(clear[:, None], C, axis=1).reshape(T * C, H * W).astype(np.float64)
        Y = rng.uniform(0.0, 1.0, size=M.shape) * M
        started = time.perf_counter()
        _, trace = damped_interpolate(Y, M, DampedConfig(alpha=0.5, rel_tol=1e-6), time_steps=T)
        elapsed = time.perf_counter() - started
        assert trace.converged
        assert elapsed < 60.0, f"damped solve took {elapsed:.1f} s"
        assert inverse_computation_count() == 1

    def test_operator_alpha_must_match(self, rng):
        Y, M = _random_problem(rng)
        op = make_diff_operator(8, 1.0)
        with pytest.raises(InvalidAlphaError):
            damped_interpolate(Y, M, DampedConfig(alpha=0.5), op=op)

    def test_missing_time_steps(self, rng):
        Y, M = _random_problem(rng)
        with pytest.raises(ShapeMismatchError):
            damped_interpolate(Y, M, DampedConfig())


class TestCountEmptySeries:
    def test_counts_columns_and_channels(self):
        M = np.ones((6, 3))
        M[[0, 2, 4], 1] = 0.0
        M[[1, 3, 5], 2] = 0.0
        assert count_empty_series(M, time_steps=3) == 2
