"""
マスク付きマルチモーダル注意機構（順伝播の参照実装）

キー・クエリはSAR符号 r から、値は光学符号 o から射影する。
雲（m_j = 0）の位置は重み0、ソフトマックスはクエリごとに正規化
"""
import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from app.core.exceptions import NoValidPositionsError


class AttentionInputs(BaseModel):
    """
    Attributes:
        r: SAR符号 N×d_r
        o: 光学符号 N×d_o
        m: 晴天マスク 長さN
        W_K, W_Q: d_r×d_k 射影
        W_V: d_o×d_v 射影
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    r: np.ndarray
    o: np.ndarray
    m: np.ndarray
    W_K: np.ndarray
    W_Q: np.ndarray
    W_V: np.ndarray

    @field_validator("r", "o", "W_K", "W_Q", "W_V", mode="before")
    @classmethod
    def as_matrix(cls, v):
        array = np.asarray(v, dtype=np.float64)
        if array.ndim != 2:
            raise ValueError(f"expected a 2-D matrix, got shape {array.shape}")
        if not np.isfinite(array).all():
            raise ValueError("matrix contains non-finite entries")
        return array

    @field_validator("m", mode="before")
    @classmethod
    def as_mask(cls, v):
        array = np.asarray(v).ravel()
        if not np.isin(array, (0, 1)).all():
            raise ValueError("mask values must be 0 or 1")
        return array.astype(bool)

    @model_validator(mode="after")
    def check_shapes(self) -> "AttentionInputs":
        N = self.r.shape[0]
        if N < 1:
            raise ValueError("at least one position is required")
        if self.o.shape[0] != N or self.m.shape[0] != N:
            raise ValueError(f"r, o, m must share N={N} positions")
        if self.W_K.shape != self.W_Q.shape or self.W_K.shape[0] != self.r.shape[1]:
            raise ValueError(
                f"W_K {self.W_K.shape} and W_Q {self.W_Q.shape} must both be d_r×d_k"
            )
        if self.W_V.shape[0] != self.o.shape[1]:
            raise ValueError(f"W_V {self.W_V.shape} must have d_o={self.o.shape[1]} rows")
        return self

    @property
    def N(self) -> int:
        return self.r.shape[0]


def _weight_matrix(inp: AttentionInputs) -> np.ndarray:
    """全クエリ分の重み行列 N×N（行 i がクエリ i）"""
    if not inp.m.any():
        raise NoValidPositionsError("attention mask has no cloud-free position")
    queries = inp.r @ inp.W_Q
    keys = inp.r @ inp.W_K
    logits = np.where(inp.m[None, :], queries @ keys.T, -np.inf)
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=1, keepdims=True)


def attention_weights(inp: AttentionInputs, i: int) -> np.ndarray:
    """
    クエリ位置 i の重みベクトル

    Raises:
        NoValidPositionsError: m ≡ 0
        IndexError: i が範囲外
    """
    if not 0 <= i < inp.N:
        raise IndexError(f"position {i} out of range for N={inp.N}")
    if not inp.m.any():
        raise NoValidPositionsError("attention mask has no cloud-free position")
    query = inp.r[i] @ inp.W_Q
    logits = np.where(inp.m, (inp.r @ inp.W_K) @ query, -np.inf)
    weights = np.exp(logits - logits.max())
    return weights / weights.sum()


def masked_attention(inp: AttentionInputs) -> np.ndarray:
    """h_i = Σ_j a_ij · W_Vᵀ o_j（雲位置のクエリも含め全位置で定義）"""
    return _weight_matrix(inp) @ (inp.o @ inp.W_V)
