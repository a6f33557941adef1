"""
ランク制約付き行列補完

X = UVᵀ（U: 土地被覆タイプごとの時間シグネチャ、V: 画素ごとの混合係数）として
F(UVᵀ) を Z, U, V の閉形式交互更新で最小化する

    Z   = (1−M)∘(UVᵀ),  Y_Z = M∘Y + Z
    U   ← (I + αΔᵀΔ)⁻¹ Y_Z V (VᵀV)⁻¹
    V   ← Y_Zᵀ U (UᵀU + α(ΔU)ᵀ(ΔU))⁻¹
"""
import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import linalg

from app.core.exceptions import (
    InvalidAlphaError,
    RankTooLargeError,
    ShapeMismatchError,
    SingularGramError,
)
from app.core.logger import SolverMethod
from app.core.settings import DampedConfig, InitMethod, MCConfig, get_settings
from app.solvers.damped import damped_interpolate, objective_F, relative_change
from app.solvers.temporal import (
    DiffOperator,
    apply_difference,
    apply_smoothing_inverse,
    make_diff_operator,
    smoothness_energy,
)
from app.solvers.trace import SolverTrace

logger = logging.getLogger(__name__)

# 特異値がこの相対値以下の成分はランク落ちとみなす
_RANK_DEFICIENT = 1e-12
# ランク落ち成分を置き換える乱数成分のエネルギー（σ₁比）
_FALLBACK_ENERGY = 1e-6
# 初期値用の減衰補間の反復上限
_SEED_FILL_ITERS = 500


class Factorization(BaseModel):
    """X = UVᵀ の因子対"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    U: np.ndarray
    V: np.ndarray

    @model_validator(mode="after")
    def check_factors(self) -> "Factorization":
        if self.U.ndim != 2 or self.V.ndim != 2 or self.U.shape[1] != self.V.shape[1]:
            raise ValueError(f"factor shapes {self.U.shape} / {self.V.shape} do not conform")
        if not (np.isfinite(self.U).all() and np.isfinite(self.V).all()):
            raise ValueError("factors contain non-finite entries")
        return self

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    def product(self) -> np.ndarray:
        return self.U @ self.V.T


def _check_inputs(Y: np.ndarray, M: np.ndarray, op: DiffOperator) -> Tuple[np.ndarray, np.ndarray]:
    Y = np.asarray(Y, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    if Y.ndim != 2 or Y.shape != M.shape:
        raise ShapeMismatchError(f"Y {Y.shape} and M {M.shape} must be equal 2-D shapes")
    if Y.shape[0] % op.T != 0:
        raise ShapeMismatchError(f"row count {Y.shape[0]} is not a multiple of T={op.T}")
    return M * Y, M


def _solve_gram(gram: np.ndarray, rhs: np.ndarray, cfg: MCConfig, name: str) -> np.ndarray:
    """rhs · gram⁻¹（gram は対称正定値、trace相対ジッター付きCholesky）"""
    if not np.isfinite(gram).all():
        raise SingularGramError(f"{name} Gram matrix has non-finite entries")
    condition = np.linalg.cond(gram)
    if not np.isfinite(condition) or condition > cfg.gram_condition_limit:
        raise SingularGramError(
            f"{name} Gram matrix is numerically singular (condition {condition:.3g}); "
            "reduce the rank"
        )
    jitter = cfg.gram_jitter * float(np.trace(gram))
    try:
        factor = linalg.cho_factor(gram + jitter * np.eye(gram.shape[0]))
    except linalg.LinAlgError as e:
        raise SingularGramError(f"{name} Gram matrix is not positive definite") from e
    return linalg.cho_solve(factor, rhs.T).T


def filled_target(fac: Factorization, Y_obs: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Y_Z = M∘Y + (1−M)∘(UVᵀ)"""
    return Y_obs + (1.0 - M) * fac.product()


def auxiliary_objective(U: np.ndarray, V: np.ndarray, Y_Z: np.ndarray, op: DiffOperator) -> float:
    """Z を固定した補助関数 ‖UVᵀ − Y_Z‖² + α‖ΔUVᵀ‖²"""
    X = U @ V.T
    residual = X - Y_Z
    return float(np.vdot(residual, residual)) + op.alpha * smoothness_energy(op, X)


def update_u(fac: Factorization, Y_Z: np.ndarray, op: DiffOperator, cfg: MCConfig) -> np.ndarray:
    """U ← (I + αΔᵀΔ)⁻¹ Y_Z V (VᵀV)⁻¹"""
    V = fac.V
    return _solve_gram(V.T @ V, apply_smoothing_inverse(op, Y_Z @ V), cfg, "V-side")


def update_v(U: np.ndarray, Y_Z: np.ndarray, op: DiffOperator, cfg: MCConfig) -> np.ndarray:
    """V ← Y_Zᵀ U (UᵀU + α(ΔU)ᵀ(ΔU))⁻¹"""
    dU = apply_difference(op, U)
    gram = U.T @ U + op.alpha * (dU.T @ dU)
    assert gram.shape == (U.shape[1], U.shape[1])
    return _solve_gram(gram, Y_Z.T @ U, cfg, "U-side")


def _random_unit_columns(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    columns = rng.standard_normal((rows, cols))
    return columns / np.linalg.norm(columns, axis=0, keepdims=True)


def _masked_row_fit(
    Y_obs: np.ndarray, M: np.ndarray, B: np.ndarray, current: np.ndarray, cfg: MCConfig
) -> np.ndarray:
    """
    各行 i について Σ_j m_ij (y_ij − a_i·b_j)² を最小化する a_i

    観測数が 2·rank 未満の行、正定値にならない行は current の値を保持
    """
    rank = B.shape[1]
    fitted = np.array(current, dtype=np.float64, copy=True)
    eye = np.eye(rank)
    for i in np.flatnonzero(M.sum(axis=1) >= 2 * rank):
        weighted = B * M[i][:, None]
        gram = weighted.T @ B
        gram += cfg.gram_jitter * float(np.trace(gram)) * eye
        try:
            fitted[i] = linalg.solve(gram, weighted.T @ Y_obs[i], assume_a="pos")
        except linalg.LinAlgError:
            continue
    return fitted


def _refine_on_observed(
    fac: Factorization, Y_obs: np.ndarray, M: np.ndarray, op: DiffOperator, cfg: MCConfig
) -> Factorization:
    """
    平滑化項を除いた観測要素のみの交互最小二乗スイープ（cfg.init_sweeps 回）

    グラム行列の条件数が √gram_condition_limit を超える、または F が増える場合は元の因子を返す
    """
    U, V = fac.U, fac.V
    for _ in range(cfg.init_sweeps):
        U = _masked_row_fit(Y_obs, M, V, U, cfg)
        V = _masked_row_fit(Y_obs.T, M.T, U, V, cfg)
    if not (np.isfinite(U).all() and np.isfinite(V).all()):
        return fac

    limit = np.sqrt(cfg.gram_condition_limit)
    if max(np.linalg.cond(U.T @ U), np.linalg.cond(V.T @ V)) > limit:
        logger.debug("observed-entry sweeps discarded: ill-conditioned factors")
        return fac
    refined = Factorization(U=U, V=V)
    if objective_F(refined.product(), Y_obs, M, op) > objective_F(fac.product(), Y_obs, M, op):
        logger.debug("observed-entry sweeps discarded: objective increased")
        return fac
    return refined


def mc_init(
    Y: np.ndarray,
    M: np.ndarray,
    cfg: Optional[MCConfig] = None,
    op: Optional[DiffOperator] = None,
) -> Factorization:
    """
    因子の初期化

    SVD初期化: 減衰補間の結果を上位Nr成分で打ち切り U = U_svd·Σ^½, V = V_svd·Σ^½。
    ランク落ち成分はシード付き乱数成分で置き換える。ランク落ちがなければ
    観測要素のみの最小二乗スイープで整える（cfg.init_sweeps 回）

    Raises:
        RankTooLargeError: Nr > min(行数, 列数)
        InvalidAlphaError: op と cfg のαが食い違う
    """
    cfg = cfg or get_settings().mc
    if op is None:
        raise ShapeMismatchError("a DiffOperator is required to initialise the factors")
    if op.alpha != cfg.alpha:
        raise InvalidAlphaError(f"operator alpha {op.alpha} != configured alpha {cfg.alpha}")
    Y_obs, M = _check_inputs(Y, M, op)

    n_rows, n_cols = Y_obs.shape
    rank = cfg.rank
    if rank > min(n_rows, n_cols):
        raise RankTooLargeError(f"rank {rank} exceeds matrix dims {n_rows}x{n_cols}")
    rng = np.random.default_rng(cfg.seed)

    if cfg.init is InitMethod.RANDOM:
        scale = np.sqrt(max(np.linalg.norm(Y_obs), 1.0) / rank)
        U = _random_unit_columns(rng, n_rows, rank) * scale
        V = _random_unit_columns(rng, n_cols, rank) * scale
        return Factorization(U=U, V=V)

    # DAMPED_* 環境変数の影響を受けないよう明示値で構築
    seed_cfg = DampedConfig.model_construct(
        alpha=cfg.alpha, max_iters=_SEED_FILL_ITERS, rel_tol=cfg.rel_tol, optical_only=False
    )
    X0, _ = damped_interpolate(Y_obs, M, seed_cfg, op=op)

    U_svd, s, Vt = linalg.svd(X0, full_matrices=False)
    s = s[:rank]
    root = np.sqrt(s)
    U = U_svd[:, :rank] * root
    V = Vt[:rank].T * root

    deficient = s <= _RANK_DEFICIENT * (s[0] if s.size else 0.0)
    if deficient.any():
        energy = _FALLBACK_ENERGY * s[0] if s[0] > 0 else 1.0
        count = int(deficient.sum())
        logger.warning("%d of %d initial components are rank deficient; using random fill", count, rank)
        U[:, deficient] = _random_unit_columns(rng, n_rows, count) * np.sqrt(energy)
        V[:, deficient] = _random_unit_columns(rng, n_cols, count) * np.sqrt(energy)
        return Factorization(U=U, V=V)
    return _refine_on_observed(Factorization(U=U, V=V), Y_obs, M, op, cfg)


def mc_step(
    fac: Factorization,
    Y: np.ndarray,
    M: np.ndarray,
    op: DiffOperator,
    cfg: Optional[MCConfig] = None,
) -> Factorization:
    """
    1回の交互更新（Z → U → Z → V の順）

    Raises:
        SingularGramError: グラム行列が数値的に特異
    """
    cfg = cfg or get_settings().mc
    Y_obs, M = _check_inputs(Y, M, op)
    if fac.U.shape[0] != Y_obs.shape[0] or fac.V.shape[0] != Y_obs.shape[1]:
        raise ShapeMismatchError(
            f"factors {fac.U.shape}/{fac.V.shape} do not conform to Y {Y_obs.shape}"
        )

    U = update_u(fac, filled_target(fac, Y_obs, M), op, cfg)
    refreshed = Factorization(U=U, V=fac.V)
    V = update_v(U, filled_target(refreshed, Y_obs, M), op, cfg)
    return Factorization(U=U, V=V)


def matrix_complete(
    Y: np.ndarray,
    M: np.ndarray,
    cfg: Optional[MCConfig] = None,
    op: Optional[DiffOperator] = None,
    *,
    time_steps: Optional[int] = None,
    bounds: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> Tuple[np.ndarray, SolverTrace]:
    """
    mc_init から mc_step を収束まで反復し X = UVᵀ を返す

    bounds（行ごとの下限・上限）が与えられれば最適化後にクランプする

    Raises:
        RankTooLargeError, SingularGramError
    """
    cfg = cfg or get_settings().mc
    if op is None:
        if time_steps is None:
            raise ShapeMismatchError("time_steps is required when no DiffOperator is given")
        op = make_diff_operator(time_steps, cfg.alpha)
    Y_obs, M = _check_inputs(Y, M, op)
    if cfg.rank > min(Y_obs.shape):
        raise RankTooLargeError(f"rank {cfg.rank} exceeds matrix dims {Y_obs.shape}")

    trace = SolverTrace(method=SolverMethod.MC)
    if not M.any():
        logger.warning("no observed entries; returning the zero reconstruction")
        trace.objective_values.append(0.0)
        trace.converged = True
        trace.degenerate = True
        return np.zeros_like(Y_obs), trace

    fac = mc_init(Y_obs, M, cfg, op)
    previous = objective_F(fac.product(), Y_obs, M, op)
    trace.objective_values.append(previous)

    for iteration in range(1, cfg.max_iters + 1):
        fac = mc_step(fac, Y_obs, M, op, cfg)
        current = objective_F(fac.product(), Y_obs, M, op)
        trace.objective_values.append(current)
        trace.iterations = iteration
        logger.debug("mc iter=%d F=%.12g", iteration, current)
        if relative_change(previous, current) < cfg.rel_tol:
            trace.converged = True
            break
        previous = current

    X = fac.product()
    assert X.shape == Y_obs.shape
    logger.info(
        "matrix completion finished: rank=%d iterations=%d converged=%s F=%.6g",
        fac.rank, trace.iterations, trace.converged, trace.final_objective,
    )

    if bounds is not None:
        lower, upper = (np.asarray(b, dtype=np.float64) for b in bounds)
        X = np.clip(X, lower[:, None], upper[:, None])
    return X, trace
