"""
Solvers module for cloudfill

時間平滑化付きの欠損補完ソルバー

公開API:
- DiffOperator / make_diff_operator / apply_smoothing_inverse: 時間差分演算子
- linear_interp_oracle / damped_interpolate: 線形補間・減衰補間
- Factorization / mc_init / mc_step / matrix_complete: ランク制約付き行列補完
- SolverTrace: 収束トレース
"""

from .temporal import (
    DiffOperator,
    apply_difference,
    apply_smoothing_inverse,
    forward_difference_matrix,
    inverse_computation_count,
    make_diff_operator,
    reset_inverse_computation_count,
    smoothness_energy,
)

from .trace import SolverTrace

from .damped import (
    count_empty_series,
    damped_interpolate,
    damped_step,
    linear_interp_oracle,
    objective_F,
)

from .completion import (
    Factorization,
    matrix_complete,
    mc_init,
    mc_step,
    update_u,
    update_v,
)

__all__ = [
    # Temporal operators
    "DiffOperator",
    "apply_difference",
    "apply_smoothing_inverse",
    "forward_difference_matrix",
    "inverse_computation_count",
    "make_diff_operator",
    "reset_inverse_computation_count",
    "smoothness_energy",
    # Trace
    "SolverTrace",
    # Damped interpolation
    "count_empty_series",
    "damped_interpolate",
    "damped_step",
    "linear_interp_oracle",
    "objective_F",
    # Matrix completion
    "Factorization",
    "matrix_complete",
    "mc_init",
    "mc_step",
    "update_u",
    "update_v",
]
