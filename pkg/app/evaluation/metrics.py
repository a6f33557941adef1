"""
評価指標

- psnr / mae / r_squared: セレクタで選んだ画素のみで計算
- binned_mae_by_cloud_ratio: エントリ単位MAEの雲量比ビン別分位点
- normalized_difference / compute_index: 正規化差分指数（NDVI / NDWI / NBR）
- index_series: 晴天画素平均による指数の日別時系列
"""
import logging
import math
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from app.core.exceptions import (
    DegenerateVarianceError,
    EmptySelectorError,
    InvalidDimensionError,
    MissingBandError,
    ShapeMismatchError,
)
from app.core.settings import MetricsConfig, get_settings
from app.stack.io import IndexRaster
from app.stack.model import Scene

logger = logging.getLogger(__name__)

R2_KEY = "r2_pearson_sq"


class EvalSubsetKind(str, Enum):
    """評価画素集合"""
    SYN = "syn"
    ALL = "all"


class IndexType(str, Enum):
    """正規化差分指数の種類"""
    NDVI = "ndvi"
    NDWI = "ndwi"
    NBR = "nbr"


# (A, B) のSentinel-2バンドコード
INDEX_PRESETS: Dict[IndexType, Tuple[str, str]] = {
    IndexType.NDVI: ("B8", "B4"),
    IndexType.NDWI: ("B8", "B11"),
    IndexType.NBR: ("B8", "B12"),
}


def _selected(
    pred: np.ndarray, truth: np.ndarray, selector: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    selector = np.asarray(selector).astype(bool)
    if pred.shape != truth.shape or selector.shape != truth.shape:
        raise ShapeMismatchError(
            f"pred {pred.shape}, truth {truth.shape} and selector {selector.shape} must agree"
        )
    if not selector.any():
        raise EmptySelectorError("selector marks no pixels")
    return pred[selector], truth[selector]


def psnr(
    pred: np.ndarray, truth: np.ndarray, selector: np.ndarray, peak: Optional[float] = None
) -> float:
    """10·log10(peak² / MSE)。MSE = 0 なら +inf"""
    peak = get_settings().metrics.psnr_peak if peak is None else peak
    p, t = _selected(pred, truth, selector)
    mse = float(np.mean((p - t) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def mae(pred: np.ndarray, truth: np.ndarray, selector: np.ndarray) -> float:
    p, t = _selected(pred, truth, selector)
    return float(np.mean(np.abs(p - t)))


def r_squared(pred: np.ndarray, truth: np.ndarray, selector: np.ndarray) -> float:
    """
    ピアソン相関係数の2乗

    Raises:
        DegenerateVarianceError: 選択画素が2未満、または真値・予測値が定数
    """
    p, t = _selected(pred, truth, selector)
    if p.size < 2:
        raise DegenerateVarianceError("r² needs at least two selected pixels")
    dp = p - p.mean()
    dt = t - t.mean()
    var_p = float(np.dot(dp, dp))
    var_t = float(np.dot(dt, dt))
    if var_p == 0.0 or var_t == 0.0:
        raise DegenerateVarianceError("r² is undefined for a constant series")
    r = float(np.dot(dp, dt)) / math.sqrt(var_p * var_t)
    return min(r * r, 1.0)


class BinnedEntry(BaseModel):
    """ビン集計の入力: 1エントリのMAEと雲量比"""
    mae: float = Field(..., ge=0.0)
    cloud_ratio: float = Field(..., ge=0.0, le=1.0)


class BinStat(BaseModel):
    """1ビン分の統計（n = 0 の場合は統計値なし）"""
    bin_low: float
    bin_high: float
    median_mae: Optional[float] = None
    q25: Optional[float] = None
    q75: Optional[float] = None
    n: int = Field(default=0, ge=0)


def bin_edges(cfg: Optional[MetricsConfig] = None) -> np.ndarray:
    cfg = cfg or get_settings().metrics
    return np.linspace(cfg.bin_low, cfg.bin_high, cfg.bin_count + 1)


def binned_mae_by_cloud_ratio(
    entries: Iterable[BinnedEntry], edges: Optional[Sequence[float]] = None
) -> List[BinStat]:
    """
    エントリ単位MAEを雲量比でビン分けし、中央値・25/75%点を求める

    ビンは [lo, hi)、最後のビンのみ閉区間。範囲外のエントリは除外
    """
    edges = bin_edges() if edges is None else np.asarray(edges, dtype=np.float64)
    entries = list(entries)
    ratios = np.array([e.cloud_ratio for e in entries], dtype=np.float64)
    maes = np.array([e.mae for e in entries], dtype=np.float64)

    stats = []
    last = len(edges) - 2
    for k in range(len(edges) - 1):
        lo, hi = float(edges[k]), float(edges[k + 1])
        upper = ratios <= hi if k == last else ratios < hi
        members = maes[(ratios >= lo) & upper]
        if members.size == 0:
            stats.append(BinStat(bin_low=lo, bin_high=hi))
            continue
        q25, median, q75 = np.percentile(members, [25, 50, 75])
        stats.append(BinStat(
            bin_low=lo,
            bin_high=hi,
            median_mae=float(median),
            q25=float(q25),
            q75=float(q75),
            n=int(members.size),
        ))
    dropped = len(entries) - sum(s.n for s in stats)
    if dropped:
        logger.info("%d entries outside the binned cloud-ratio range were dropped", dropped)
    return stats


def normalized_difference(
    band_a: np.ndarray, band_b: np.ndarray, eps: Optional[float] = None
) -> np.ndarray:
    """(A−B)/(A+B)。|A+B| < eps の位置は0"""
    eps = get_settings().metrics.nd_eps if eps is None else eps
    a = np.asarray(band_a, dtype=np.float64)
    b = np.asarray(band_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"band shapes differ: {a.shape} vs {b.shape}")
    total = a + b
    guarded = np.abs(total) < eps
    return np.where(guarded, 0.0, (a - b) / np.where(guarded, 1.0, total))


def band_matches(name: str, code: str) -> bool:
    """バンド名がコードに一致するか（B8-NIR は B8 に一致、B8A-NarrowNIR は一致しない）"""
    return name == code or name.startswith(code + "-")


def resolve_index_bands(band_names: Sequence[str], index_type: IndexType) -> Tuple[int, int]:
    """
    指数プリセットに必要な2バンドの位置を返す

    Raises:
        MissingBandError: 必要なバンドが存在しない
    """
    positions = []
    for code in INDEX_PRESETS[IndexType(index_type)]:
        found = [i for i, name in enumerate(band_names) if band_matches(name, code)]
        if not found:
            raise MissingBandError(
                f"{IndexType(index_type).value} needs band {code}, available: {list(band_names)}"
            )
        positions.append(found[0])
    return positions[0], positions[1]


def compute_index(scene: Scene, index_type: IndexType, day: int) -> IndexRaster:
    """
    指定日の正規化差分指数ラスタ

    Raises:
        MissingBandError: 必要なバンドが存在しない
        InvalidDimensionError: day が範囲外
    """
    index_type = IndexType(index_type)
    if not 0 <= day < scene.T:
        raise InvalidDimensionError(f"day {day} out of range for T={scene.T}")
    a, b = resolve_index_bands([band.name for band in scene.bands], index_type)
    values = normalized_difference(scene.data[day, a], scene.data[day, b])
    mask = scene.band_mask(a)[day] & scene.band_mask(b)[day]
    return IndexRaster(
        index_type=index_type.value,
        day=day,
        date=scene.dates[day] if scene.dates else None,
        data=values.astype(np.float32),
        mask=mask,
    )


class IndexSeriesPoint(BaseModel):
    """指数時系列の1日分（晴天画素の平均）"""
    day: int = Field(..., ge=0)
    date: Optional[str] = None
    mean: Optional[float] = None
    clear_pixels: int = Field(default=0, ge=0)


def index_series(scene: Scene, index_type: IndexType) -> List[IndexSeriesPoint]:
    """
    全日の指数を晴天画素で平均した時系列

    晴天画素のない日は mean=None

    Raises:
        MissingBandError: 必要なバンドが存在しない
    """
    points = []
    for day in range(scene.T):
        raster = compute_index(scene, index_type, day)
        clear = raster.mask.astype(bool)
        n = int(clear.sum())
        points.append(IndexSeriesPoint(
            day=day,
            date=raster.date,
            mean=float(raster.data[clear].astype(np.float64).mean()) if n else None,
            clear_pixels=n,
        ))
    empty = sum(1 for p in points if p.mean is None)
    if empty:
        logger.warning("%d of %d days have no clear pixels for %s", empty, scene.T, IndexType(index_type).value)
    return points
