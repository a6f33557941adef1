"""
ソルバー収束トレース
"""
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field

from app.core.logger import SolverLog, SolverMethod


class SolverTrace(BaseModel):
    """
    反復ごとの目的関数値と収束状況

    objective_values[0] は初期値、以降は各反復後の F(X_k)
    """

    method: SolverMethod
    objective_values: List[float] = Field(default_factory=list)
    iterations: int = Field(default=0, ge=0)
    converged: bool = False
    degenerate: bool = False
    empty_series: int = Field(default=0, ge=0)

    @property
    def final_objective(self) -> Optional[float]:
        return self.objective_values[-1] if self.objective_values else None

    def is_monotone(self, rel_slack: float = 1e-9, abs_slack: float = 1e-10) -> bool:
        """目的関数が非増加か（相対・絶対の許容誤差付き）"""
        values = np.asarray(self.objective_values, dtype=np.float64)
        if values.size < 2:
            return True
        increase = values[1:] - values[:-1]
        slack = np.maximum(abs_slack, rel_slack * np.abs(values[:-1]))
        return bool(np.all(increase <= slack))

    def to_solver_log(self, duration_ms: Optional[float] = None) -> SolverLog:
        """構造化ログ用レコードへ変換"""
        return SolverLog(
            method=self.method,
            iterations=self.iterations,
            final_objective=self.final_objective,
            converged=self.converged,
            degenerate=self.degenerate,
            empty_series=self.empty_series,
            duration_ms=duration_ms,
        )
