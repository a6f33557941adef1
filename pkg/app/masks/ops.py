"""
雲マスク操作

マスク規約: 1 = 晴天（観測あり）、0 = 雲・欠損

- synthesize_holdout: 合成雲との合成とホールドアウト画素の抽出
- filter_small_components: 小さな雲領域・晴天領域の除去
- cloud_ratio: 雲量比
"""
import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import ndimage

from app.core.exceptions import InvalidDimensionError, ShapeMismatchError
from app.core.settings import MaskConfig, get_settings

logger = logging.getLogger(__name__)


def as_mask(mask: np.ndarray) -> np.ndarray:
    """{0,1} の uint8 配列へ正規化"""
    array = np.asarray(mask)
    if not np.isin(array, (0, 1)).all():
        raise ValueError("mask values must be 0 or 1")
    return array.astype(np.uint8)


class SyntheticHoldout(BaseModel):
    """
    合成雲ホールドアウト

    combined = original AND synthetic（晴天規約）、holdout = original AND NOT combined
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    original: np.ndarray
    synthetic: np.ndarray
    combined: np.ndarray
    holdout: np.ndarray

    @property
    def holdout_count(self) -> int:
        return int(self.holdout.sum())


def synthesize_holdout(original: np.ndarray, sampled: np.ndarray) -> SyntheticHoldout:
    """
    元マスクにサンプルした雲マスクを重ね、新たに雲となった晴天画素をホールドアウトとする

    Raises:
        ShapeMismatchError: 形状不一致
    """
    original = as_mask(original)
    sampled = as_mask(sampled)
    if original.shape != sampled.shape:
        raise ShapeMismatchError(f"mask shapes differ: {original.shape} vs {sampled.shape}")
    combined = original & sampled
    holdout = original & (1 - combined)
    return SyntheticHoldout(
        original=original, synthetic=sampled, combined=combined, holdout=holdout
    )


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 4:
        return ndimage.generate_binary_structure(2, 1)
    if connectivity == 8:
        return ndimage.generate_binary_structure(2, 2)
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def _flip_small(mask: np.ndarray, value: int, min_size: int, structure: np.ndarray) -> np.ndarray:
    """値 value の連結成分のうち min_size 未満のものを反転"""
    region = mask == value
    labels, count = ndimage.label(region, structure=structure)
    if count == 0:
        return mask
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    small = sizes < min_size
    small[0] = False
    # グリッド全体を覆う成分は反転しない
    small[sizes == mask.size] = False
    result = mask.copy()
    result[small[labels]] = 1 - value
    return result


def filter_small_components(
    mask: np.ndarray,
    min_size: Optional[int] = None,
    connectivity: Optional[int] = None,
    cfg: Optional[MaskConfig] = None,
) -> np.ndarray:
    """
    min_size 未満の雲領域を晴天へ、続いて min_size 未満の晴天領域を雲へ反転

    Args:
        mask: 2次元マスク [H][W]
        min_size: 最小画素数（省略時 MaskConfig.min_component_size）
        connectivity: 4 または 8（省略時 MaskConfig.connectivity）
    """
    cfg = cfg or get_settings().mask
    min_size = cfg.min_component_size if min_size is None else min_size
    connectivity = cfg.connectivity if connectivity is None else connectivity

    mask = as_mask(mask)
    if mask.ndim != 2:
        raise InvalidDimensionError(f"expected a 2-D mask, got shape {mask.shape}")
    structure = _structure(connectivity)

    cleared = _flip_small(mask, 0, min_size, structure)
    return _flip_small(cleared, 1, min_size, structure)


def filter_small_components_stack(mask: np.ndarray, **kwargs) -> np.ndarray:
    """[T][H][W] マスクの各日に filter_small_components を適用"""
    mask = as_mask(mask)
    if mask.ndim != 3:
        raise InvalidDimensionError(f"expected a [T][H][W] mask, got shape {mask.shape}")
    return np.stack([filter_small_components(day, **kwargs) for day in mask])


def cloud_ratio(mask: np.ndarray) -> float:
    """雲（0）の割合"""
    mask = np.asarray(mask)
    if mask.size == 0:
        raise InvalidDimensionError("cloud ratio of an empty mask is undefined")
    return float(np.count_nonzero(mask == 0) / mask.size)
