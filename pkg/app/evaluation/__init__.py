"""
Evaluation module for cloudfill

評価指標と正規化差分指数
"""

from .metrics import (
    BinnedEntry,
    BinStat,
    EvalSubsetKind,
    INDEX_PRESETS,
    IndexSeriesPoint,
    IndexType,
    R2_KEY,
    bin_edges,
    binned_mae_by_cloud_ratio,
    compute_index,
    index_series,
    mae,
    normalized_difference,
    psnr,
    r_squared,
    resolve_index_bands,
)

__all__ = [
    "BinnedEntry",
    "BinStat",
    "EvalSubsetKind",
    "INDEX_PRESETS",
    "IndexSeriesPoint",
    "IndexType",
    "R2_KEY",
    "bin_edges",
    "binned_mae_by_cloud_ratio",
    "compute_index",
    "index_series",
    "mae",
    "normalized_difference",
    "psnr",
    "r_squared",
    "resolve_index_bands",
]
