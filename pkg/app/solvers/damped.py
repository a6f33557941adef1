"""
減衰補間ソルバー

F(X) = ‖M∘(X−Y)‖²_F + α·Σ_t‖X_{t+1}−X_t‖²_F を補助関数の固定点反復で最小化

    X ← (I + αΔᵀΔ)⁻¹ (M∘Y + (1−M)∘X)

α→0 の極限は画素ごとの線形補間（端点は定数外挿）
"""
import logging
from typing import Optional, Tuple

import numpy as np

from app.core.exceptions import InvalidAlphaError, ShapeMismatchError
from app.core.logger import SolverMethod
from app.core.settings import DampedConfig, get_settings
from app.solvers.temporal import (
    DiffOperator,
    apply_smoothing_inverse,
    make_diff_operator,
    smoothness_energy,
)
from app.solvers.trace import SolverTrace

logger = logging.getLogger(__name__)

_TINY = np.finfo(np.float64).tiny


def _check_pair(Y: np.ndarray, M: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    Y = np.asarray(Y, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    if Y.shape != M.shape or Y.ndim != 2:
        raise ShapeMismatchError(f"Y {Y.shape} and M {M.shape} must be equal 2-D shapes")
    return Y, M


def relative_change(previous: float, current: float) -> float:
    """|F_k − F_{k−1}| / max(F_{k−1}, ε)"""
    return abs(current - previous) / max(previous, _TINY)


def objective_F(X: np.ndarray, Y: np.ndarray, M: np.ndarray, op: DiffOperator) -> float:
    """F(X) = ‖M∘(X−Y)‖² + α‖ΔX‖²"""
    Y, M = _check_pair(Y, M)
    X = np.asarray(X, dtype=np.float64)
    if X.shape != Y.shape:
        raise ShapeMismatchError(f"X {X.shape} does not match Y {Y.shape}")
    residual = M * (X - Y)
    return float(np.vdot(residual, residual)) + op.alpha * smoothness_energy(op, X)


def auxiliary_objective(
    X: np.ndarray, Z: np.ndarray, Y: np.ndarray, M: np.ndarray, op: DiffOperator
) -> float:
    """Q(X, Z) = ‖M∘(X−Y)‖² + ‖(1−M)∘(X−Z)‖² + α‖ΔX‖²（Q(X, X) = F(X)）"""
    gap = (1.0 - np.asarray(M, dtype=np.float64)) * (np.asarray(X) - np.asarray(Z))
    return objective_F(X, Y, M, op) + float(np.vdot(gap, gap))


def damped_step(X: np.ndarray, Y: np.ndarray, M: np.ndarray, op: DiffOperator) -> np.ndarray:
    """Q(·, X) の最小化点 (I + αΔᵀΔ)⁻¹(M∘Y + (1−M)∘X)"""
    return apply_smoothing_inverse(op, M * Y + (1.0 - M) * X)


def count_empty_series(M: np.ndarray, *, time_steps: int) -> int:
    """観測が1つもない (チャネル, 画素) 系列の数"""
    M = np.asarray(M)
    if M.shape[0] % time_steps != 0:
        raise ShapeMismatchError(f"row count {M.shape[0]} is not a multiple of T={time_steps}")
    series = M.reshape(time_steps, -1) > 0
    return int(np.count_nonzero(~series.any(axis=0)))


def linear_interp_oracle(Y: np.ndarray, M: np.ndarray, *, time_steps: int) -> np.ndarray:
    """
    系列ごとの区分線形補間（端点外は最寄り観測値で定数外挿）

    観測のない系列は0
    """
    Y, M = _check_pair(Y, M)
    T = time_steps
    if Y.shape[0] % T != 0:
        raise ShapeMismatchError(f"row count {Y.shape[0]} is not a multiple of T={T}")

    values = Y.reshape(T, -1)
    observed = M.reshape(T, -1) > 0
    t = np.arange(T)[:, None]

    prev = np.maximum.accumulate(np.where(observed, t, -1), axis=0)
    nxt = np.minimum.accumulate(np.where(observed, t, T)[::-1], axis=0)[::-1]
    has_prev = prev >= 0
    has_next = nxt < T
    empty = ~has_prev & ~has_next

    lo = np.where(has_prev, prev, nxt)
    hi = np.where(has_next, nxt, prev)
    lo = np.where(empty, 0, lo)
    hi = np.where(empty, 0, hi)

    y_lo = np.take_along_axis(values, lo, axis=0)
    y_hi = np.take_along_axis(values, hi, axis=0)
    span = hi - lo
    weight = np.where(span > 0, (t - lo) / np.maximum(span, 1), 0.0)
    X = y_lo + weight * (y_hi - y_lo)
    X[empty] = 0.0
    return X.reshape(Y.shape)


def _selected_channels(row_selector: np.ndarray, T: int, n_rows: int) -> np.ndarray:
    """行セレクタが全時刻で同じチャネル集合を選んでいるか検証"""
    selector = np.asarray(row_selector, dtype=bool)
    if selector.shape != (n_rows,):
        raise ShapeMismatchError(f"row selector shape {selector.shape} != ({n_rows},)")
    per_time = selector.reshape(T, -1)
    if not (per_time == per_time[0]).all():
        raise ShapeMismatchError("row selector must pick the same channels at every time step")
    return selector


def damped_interpolate(
    Y: np.ndarray,
    M: np.ndarray,
    cfg: Optional[DampedConfig] = None,
    *,
    time_steps: Optional[int] = None,
    op: Optional[DiffOperator] = None,
    row_selector: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, SolverTrace]:
    """
    減衰補間

    初期値は線形補間（α→0 の極限）。|F_k − F_{k−1}| / F_{k−1} < rel_tol または
    max_iters 到達で停止

    Args:
        Y: 観測行列（マスク0の位置は0）
        M: マスク行列
        cfg: 設定（省略時は get_settings().damped）
        time_steps: 時系列長T（op 省略時に必須）
        op: 構築済みの差分演算子（平滑化逆行列を使い回す）
        row_selector: 補間する行（未選択行は M∘Y のまま返す）

    Raises:
        ShapeMismatchError: 形状不一致
        InvalidAlphaError: op と cfg のαが食い違う
    """
    cfg = cfg or get_settings().damped
    Y, M = _check_pair(Y, M)

    if op is None:
        if time_steps is None:
            raise ShapeMismatchError("time_steps is required when no DiffOperator is given")
        op = make_diff_operator(time_steps, cfg.alpha)
    elif op.alpha != cfg.alpha:
        raise InvalidAlphaError(f"operator alpha {op.alpha} != configured alpha {cfg.alpha}")
    elif time_steps is not None and time_steps != op.T:
        raise ShapeMismatchError(f"time_steps {time_steps} != operator T {op.T}")
    T = op.T

    result = M * Y
    if row_selector is not None:
        selector = _selected_channels(row_selector, T, Y.shape[0])
        Y_sel, M_sel = Y[selector], M[selector]
    else:
        selector = None
        Y_sel, M_sel = Y, M

    trace = SolverTrace(
        method=SolverMethod.DAMPED,
        empty_series=count_empty_series(M_sel, time_steps=T) if Y_sel.size else 0,
        degenerate=not M_sel.any(),
    )
    if trace.empty_series:
        logger.warning("%d series have no observation and are filled with 0", trace.empty_series)

    if Y_sel.size == 0:
        trace.converged = True
        return result, trace

    Y_obs = M_sel * Y_sel
    X = linear_interp_oracle(Y_obs, M_sel, time_steps=T)
    previous = objective_F(X, Y_obs, M_sel, op)
    trace.objective_values.append(previous)

    for iteration in range(1, cfg.max_iters + 1):
        X = damped_step(X, Y_obs, M_sel, op)
        current = objective_F(X, Y_obs, M_sel, op)
        trace.objective_values.append(current)
        trace.iterations = iteration
        logger.debug("damped iter=%d F=%.12g", iteration, current)
        if relative_change(previous, current) < cfg.rel_tol:
            trace.converged = True
            break
        previous = current

    logger.info(
        "damped interpolation finished: iterations=%d converged=%s F=%.6g",
        trace.iterations, trace.converged, trace.final_objective,
    )

    if selector is None:
        return X, trace
    result[selector] = X
    return result, trace
