"""
Report module for cloudfill

再構成結果の評価レポート生成とCSV出力

実装機能:
- EvalReport: syn / all 部分集合ごとの PSNR・MAE・r²、バンド別PSNR、雲量比ビン統計
- evaluate_scenes: 単一エントリ評価
- evaluate_entries: 複数エントリ（JSONエントリリスト）の集約評価
- write_report_csv: pandasによる metrics.csv / binned.csv 出力（有効数字6桁）
- write_index_series_csv: 指数時系列の index_series.csv 出力
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from app.core.exceptions import (
    DegenerateVarianceError,
    EmptySelectorError,
    InvariantViolationError,
    ShapeMismatchError,
)
from app.evaluation.metrics import (
    R2_KEY,
    BinnedEntry,
    BinStat,
    EvalSubsetKind,
    IndexSeriesPoint,
    binned_mae_by_cloud_ratio,
    mae,
    psnr,
    r_squared,
)
from app.masks.ops import cloud_ratio
from app.stack.model import Modality, Scene

logger = logging.getLogger(__name__)

ALL_BANDS = "ALL"
METRIC_COLUMNS = ["method", "subset", "metric", "band", "value"]
BINNED_COLUMNS = ["method", "bin_low", "bin_high", "median_mae", "q25", "q75", "n"]
INDEX_SERIES_COLUMNS = ["index_type", "day", "date", "mean", "clear_pixels"]


class MetricRecord(BaseModel):
    """metrics.csv の1行"""
    subset: EvalSubsetKind
    metric: str = Field(..., min_length=1)
    band: str = Field(default=ALL_BANDS, min_length=1)
    value: float


class EvalReport(BaseModel):
    """評価レポート"""
    method: str = Field(..., min_length=1, description="再構成手法名")
    metrics: List[MetricRecord] = Field(default_factory=list)
    binned: Optional[List[BinStat]] = None

    def value(self, subset: EvalSubsetKind, metric: str, band: str = ALL_BANDS) -> Optional[float]:
        for record in self.metrics:
            if record.subset is subset and record.metric == metric and record.band == band:
                return record.value
        return None

    def metrics_frame(self) -> pd.DataFrame:
        rows = [
            [self.method, r.subset.value, r.metric, r.band, r.value] for r in self.metrics
        ]
        return pd.DataFrame(rows, columns=METRIC_COLUMNS)

    def binned_frame(self) -> pd.DataFrame:
        rows = [
            [self.method, b.bin_low, b.bin_high, b.median_mae, b.q25, b.q75, b.n]
            for b in (self.binned or [])
        ]
        frame = pd.DataFrame(rows, columns=BINNED_COLUMNS)
        for column in ("median_mae", "q25", "q75"):
            frame[column] = frame[column].astype("float64")
        return frame


class EvalEntry(BaseModel):
    """評価対象1件（予測・真値・ホールドアウト）"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    pred: Scene
    truth: Scene
    holdout: np.ndarray
    cloud_ratio: Optional[float] = Field(default=None, ge=0.0, le=1.0)


class EntrySpec(BaseModel):
    """JSONエントリリストの1件（コンテナパス）"""
    pred: Path
    truth: Path
    holdout: Path
    cloud_ratio: Optional[float] = Field(default=None, ge=0.0, le=1.0)


def load_entry_specs(path: Union[str, Path]) -> List[EntrySpec]:
    """JSONエントリリストの読み込み（相対パスはファイル位置基準）"""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(raw, list) or not raw:
        raise ValueError(f"{path} must hold a non-empty JSON list of entries")
    specs = [EntrySpec(**item) for item in raw]
    base = path.parent
    return [
        spec.model_copy(update={
            "pred": base / spec.pred,
            "truth": base / spec.truth,
            "holdout": base / spec.holdout,
        })
        for spec in specs
    ]


class _Selection(BaseModel):
    """光学バンドの予測・真値と syn / all セレクタ [T][C1][H][W]"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    pred: np.ndarray
    truth: np.ndarray
    syn: np.ndarray
    all: np.ndarray


def _select(entry: EvalEntry) -> _Selection:
    pred, truth = entry.pred, entry.truth
    if pred.data.shape != truth.data.shape:
        raise ShapeMismatchError(f"pred {pred.data.shape} vs truth {truth.data.shape}")
    if [b.name for b in pred.bands] != [b.name for b in truth.bands]:
        raise ShapeMismatchError("pred and truth band lists differ")
    grid = (truth.T, truth.H, truth.W)
    holdout = np.asarray(entry.holdout).astype(bool)
    if holdout.shape != grid:
        raise ShapeMismatchError(f"holdout shape {holdout.shape} != {grid}")

    clear = truth.clear_mask[Modality.OPTICAL].astype(bool)
    if np.any(holdout & ~clear):
        raise InvariantViolationError("holdout marks pixels that are cloudy in the truth scene")

    optical = truth.optical_indices
    shape = (truth.T, len(optical), truth.H, truth.W)
    return _Selection(
        pred=pred.data[:, optical].astype(np.float64),
        truth=truth.data[:, optical].astype(np.float64),
        syn=np.broadcast_to(holdout[:, None], shape),
        all=np.broadcast_to(clear[:, None], shape),
    )


def _pooled(selections: Sequence[_Selection], band: Optional[int], subset: EvalSubsetKind):
    def gather(name: str) -> np.ndarray:
        parts = []
        for s in selections:
            array = getattr(s, name)
            parts.append((array if band is None else array[:, band]).ravel())
        return np.concatenate(parts)

    return gather("pred"), gather("truth"), gather(subset.value)


def _subset_records(
    selections: Sequence[_Selection], band_names: Sequence[str], subset: EvalSubsetKind
) -> List[MetricRecord]:
    pred, truth, selector = _pooled(selections, None, subset)
    records = [
        MetricRecord(subset=subset, metric="psnr", value=psnr(pred, truth, selector)),
        MetricRecord(subset=subset, metric="mae", value=mae(pred, truth, selector)),
    ]
    try:
        records.append(
            MetricRecord(subset=subset, metric=R2_KEY, value=r_squared(pred, truth, selector))
        )
    except DegenerateVarianceError as e:
        logger.warning("%s r² omitted: %s", subset.value, e)

    for k, name in enumerate(band_names):
        pred_k, truth_k, sel_k = _pooled(selections, k, subset)
        records.append(
            MetricRecord(subset=subset, metric="psnr", band=name, value=psnr(pred_k, truth_k, sel_k))
        )
    return records


def evaluate_entries(
    entries: Sequence[EvalEntry],
    method: str,
    edges: Optional[Sequence[float]] = None,
) -> EvalReport:
    """
    全エントリをプールして syn / all の指標を計算

    ホールドアウトが空なら syn 行は出力しない。複数エントリの場合は
    エントリ単位の all-MAE を雲量比でビン集計する

    Raises:
        ShapeMismatchError, InvariantViolationError: セレクタ・形状の不整合
        EmptySelectorError: all 部分集合が空
    """
    if not entries:
        raise EmptySelectorError("no entries to evaluate")
    selections = [_select(e) for e in entries]
    truth = entries[0].truth
    band_names = [truth.bands[c].name for c in truth.optical_indices]
    for entry in entries[1:]:
        names = [entry.truth.bands[c].name for c in entry.truth.optical_indices]
        if names != band_names:
            raise ShapeMismatchError("entries carry different optical band lists")

    records: List[MetricRecord] = []
    if any(s.syn.any() for s in selections):
        records.extend(_subset_records(selections, band_names, EvalSubsetKind.SYN))
    else:
        logger.info("holdout is empty; syn metrics omitted")
    records.extend(_subset_records(selections, band_names, EvalSubsetKind.ALL))

    report = EvalReport(method=method, metrics=records)
    if len(entries) > 1:
        report.binned = binned_mae_by_cloud_ratio(_binned_entries(entries, selections), edges)
    return report


def _binned_entries(entries: Sequence[EvalEntry], selections: Sequence[_Selection]) -> List[BinnedEntry]:
    binned = []
    for entry, selection in zip(entries, selections):
        if not selection.all.any():
            logger.warning("entry without clear pixels skipped from binning")
            continue
        ratio = entry.cloud_ratio
        if ratio is None:
            combined = entry.truth.clear_mask[Modality.OPTICAL] & (1 - entry.holdout.astype(np.uint8))
            ratio = cloud_ratio(combined)
        binned.append(BinnedEntry(
            mae=mae(selection.pred, selection.truth, selection.all), cloud_ratio=ratio
        ))
    return binned


def evaluate_scenes(pred: Scene, truth: Scene, holdout: np.ndarray, method: str) -> EvalReport:
    """単一エントリの評価"""
    return evaluate_entries([EvalEntry(pred=pred, truth=truth, holdout=holdout)], method)


def write_report_csv(report: EvalReport, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    metrics.csv（と binned があれば binned.csv）を書き出す

    +inf は "inf"、統計値なしのセルは空欄
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    options = {"index": False, "float_format": "%.6g", "lineterminator": "\n"}

    written = {"metrics": out_dir / "metrics.csv"}
    report.metrics_frame().to_csv(written["metrics"], **options)
    if report.binned is not None:
        written["binned"] = out_dir / "binned.csv"
        report.binned_frame().to_csv(written["binned"], **options)
    return written


def index_series_frame(points: Sequence[IndexSeriesPoint], index_type: str) -> pd.DataFrame:
    rows = [[index_type, p.day, p.date, p.mean, p.clear_pixels] for p in points]
    frame = pd.DataFrame(rows, columns=INDEX_SERIES_COLUMNS)
    frame["mean"] = frame["mean"].astype("float64")
    return frame


def write_index_series_csv(
    points: Sequence[IndexSeriesPoint], index_type: str, out_dir: Union[str, Path]
) -> Path:
    """index_series.csv を書き出す（晴天画素のない日の mean は空欄）"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "index_series.csv"
    index_series_frame(points, index_type).to_csv(
        path, index=False, float_format="%.6g", lineterminator="\n"
    )
    return path
