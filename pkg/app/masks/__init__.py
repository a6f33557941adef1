"""
Masks module for cloudfill

雲マスクの後処理とホールドアウト合成
"""

from .ops import (
    SyntheticHoldout,
    as_mask,
    cloud_ratio,
    filter_small_components,
    filter_small_components_stack,
    synthesize_holdout,
)

__all__ = [
    "SyntheticHoldout",
    "as_mask",
    "cloud_ratio",
    "filter_small_components",
    "filter_small_components_stack",
    "synthesize_holdout",
]
