"""
時間方向の構造化演算子

- 前進差分行列 D（対角 −1、上副対角 +1、最終行0）
- Δ = D ⊗ I_C のクロネッカー積を実体化せずに適用
- 平滑化逆行列 (I + αDᵀD)⁻¹ の事前計算（1ソルブにつき1回）
"""
import logging
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg

from app.core.exceptions import InvalidAlphaError, InvalidDimensionError, ShapeMismatchError

logger = logging.getLogger(__name__)

# 平滑化逆行列の計算回数（性能計測用カウンタ）
_inverse_computations = 0


def inverse_computation_count() -> int:
    """プロセス内で平滑化逆行列を計算した回数"""
    return _inverse_computations


def reset_inverse_computation_count() -> None:
    """カウンタのリセット（主にテスト用）"""
    global _inverse_computations
    _inverse_computations = 0


class DiffOperator(BaseModel):
    """
    時間差分演算子

    Attributes:
        T: 時系列長
        alpha: 減衰係数α
        D: T×T 前進差分行列
        smoothing_inverse: (I_T + αDᵀD)⁻¹
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    T: int = Field(..., ge=2)
    alpha: float = Field(..., ge=0.0)
    D: np.ndarray
    smoothing_inverse: np.ndarray


def forward_difference_matrix(T: int) -> np.ndarray:
    """T×T 前進差分行列（最終行は0）"""
    D = np.zeros((T, T))
    idx = np.arange(T - 1)
    D[idx, idx] = -1.0
    D[idx, idx + 1] = 1.0
    return D


def make_diff_operator(T: int, alpha: float) -> DiffOperator:
    """
    差分演算子と平滑化逆行列を構築

    Raises:
        InvalidDimensionError: T < 2
        InvalidAlphaError: α < 0 または非有限
    """
    if T < 2:
        raise InvalidDimensionError(f"time length must be >= 2, got {T}")
    if not np.isfinite(alpha) or alpha < 0:
        raise InvalidAlphaError(f"alpha must be a finite value >= 0, got {alpha}")

    global _inverse_computations
    D = forward_difference_matrix(T)
    system = np.eye(T) + alpha * (D.T @ D)
    inverse = linalg.solve(system, np.eye(T), assume_a="pos")
    # 数値誤差で崩れた対称性を戻す
    inverse = 0.5 * (inverse + inverse.T)
    _inverse_computations += 1
    logger.debug("smoothing inverse computed: T=%d alpha=%g", T, alpha)

    D.flags.writeable = False
    inverse.flags.writeable = False
    return DiffOperator(T=T, alpha=float(alpha), D=D, smoothing_inverse=inverse)


def _time_major(op: DiffOperator, X: np.ndarray) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """(C·T)×n 行列を (T, C·n) に並べ替える"""
    X = np.asarray(X, dtype=np.float64)
    shape = X.shape
    if X.ndim not in (1, 2) or shape[0] % op.T != 0:
        raise ShapeMismatchError(
            f"row count {shape[0] if X.ndim else 0} is not a multiple of T={op.T}"
        )
    return X.reshape(op.T, -1), shape


def apply_smoothing_inverse(op: DiffOperator, X: np.ndarray) -> np.ndarray:
    """((I + αDᵀD)⁻¹ ⊗ I_C) · X"""
    strips, shape = _time_major(op, X)
    return (op.smoothing_inverse @ strips).reshape(shape)


def apply_difference(op: DiffOperator, X: np.ndarray, transpose: bool = False) -> np.ndarray:
    """Δ·X（transpose=True で Δᵀ·X）"""
    strips, shape = _time_major(op, X)
    D = op.D.T if transpose else op.D
    return (D @ strips).reshape(shape)


def smoothness_energy(op: DiffOperator, X: np.ndarray) -> float:
    """‖ΔX‖²_F = Σ_t ‖X_{t+1} − X_t‖²_F"""
    diff = apply_difference(op, X)
    return float(np.vdot(diff, diff))
