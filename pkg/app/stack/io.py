"""
Stack container I/O for cloudfill

ディレクトリ形式のコンテナ読み書き

- Scene: meta.json + data.bin（f32le, C順 [T][C][H][W]）+ mask_<modality>.bin（u8 [T][H][W]）
- マスク: meta.json（kind "mask", layout "THW"）+ mask.bin
- 指数ラスタ: meta.json（kind "index", layout "HW"）+ data.bin + mask.bin
- ホールドアウト: holdout.bin（u8 [T][H][W]）

ディスク上にNaNは書かない。欠損はマスクのみで表現する
"""
import json
import logging
from datetime import date
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from app.core.exceptions import (
    CorruptContainerError,
    InvariantViolationError,
    InvalidDateError,
    RejectedValueError,
    ShapeMismatchError,
    UnsupportedVersionError,
)
from app.masks.ops import as_mask
from app.stack.model import BandSpec, Modality, Scene

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
META_FILE = "meta.json"
DATA_FILE = "data.bin"
MASK_FILE = "mask.bin"
HOLDOUT_FILE = "holdout.bin"

_F32 = np.dtype("<f4")
_U8 = np.dtype("u1")

PathLike = Union[str, Path]


def mask_file_name(modality: Modality) -> str:
    return f"mask_{modality.value}.bin"


def _write_meta(directory: Path, meta: Dict[str, Any]) -> None:
    text = json.dumps(meta, ensure_ascii=False, indent=2, sort_keys=True)
    (directory / META_FILE).write_text(text + "\n", encoding="utf-8")


def _read_meta(directory: Path, kind: str, layout: str, encoding: str) -> Dict[str, Any]:
    path = directory / META_FILE
    if not path.is_file():
        raise CorruptContainerError(f"{path} is missing")
    try:
        meta = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CorruptContainerError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(meta, dict):
        raise CorruptContainerError(f"{path} must hold a JSON object")

    if meta.get("format_version") != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported format_version {meta.get('format_version')!r}")
    if meta.get("kind", "scene") != kind:
        raise UnsupportedVersionError(f"expected a {kind} container, got {meta.get('kind')!r}")
    if meta.get("layout") != layout:
        raise UnsupportedVersionError(f"unsupported layout {meta.get('layout')!r}")
    if meta.get("value_encoding") != encoding:
        raise UnsupportedVersionError(f"unsupported value_encoding {meta.get('value_encoding')!r}")
    return meta


def _dims(meta: Dict[str, Any], names: Tuple[str, ...]) -> Tuple[int, ...]:
    dims = meta.get("dims")
    if not isinstance(dims, dict):
        raise CorruptContainerError("meta.json lacks a dims object")
    try:
        values = tuple(int(dims[name]) for name in names)
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptContainerError(f"meta.json dims must define {names}") from e
    if any(v < 0 for v in values):
        raise CorruptContainerError(f"negative dims {values}")
    return values


def _read_raw(path: Path, dtype: np.dtype, shape: Tuple[int, ...]) -> np.ndarray:
    """サイズ検証付きの生バイナリ読み込み"""
    if not path.is_file():
        raise CorruptContainerError(f"{path} is missing")
    expected = int(np.prod(shape)) * dtype.itemsize
    actual = path.stat().st_size
    if actual != expected:
        raise CorruptContainerError(f"{path} has {actual} bytes, expected {expected}")
    return np.fromfile(path, dtype=dtype).reshape(shape)


def _write_raw(path: Path, array: np.ndarray, dtype: np.dtype) -> None:
    np.ascontiguousarray(array, dtype=dtype).tofile(path)


def _check_finite(array: np.ndarray, what: str) -> None:
    if not np.isfinite(array).all():
        raise RejectedValueError(f"{what} contains NaN or infinite values")


def _check_dates(dates: Any, where: str) -> Optional[List[str]]:
    """日付ラベルは None か ISO 8601 (YYYY-MM-DD) 文字列のリスト"""
    if dates is None:
        return None
    if not isinstance(dates, list):
        raise InvalidDateError(f"{where}: dates must be a list, got {type(dates).__name__}")
    for label in dates:
        try:
            date.fromisoformat(label)
        except (TypeError, ValueError) as e:
            raise InvalidDateError(f"{where}: invalid date label {label!r}") from e
    return dates


# ---- Scene ----

def write_stack(scene: Scene, path: PathLike) -> None:
    """
    Sceneをコンテナへ書き込む

    Raises:
        RejectedValueError: 非有限値を含む
        InvalidDateError: 日付ラベルが ISO 8601 でない
        OSError: 書き込み失敗
    """
    _check_finite(scene.data, "scene data")
    _check_dates(scene.dates, "scene")
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)

    modalities = [m for m in Modality if m in scene.clear_mask]
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": "scene",
        "layout": "TCHW",
        "value_encoding": "f32le",
        "dims": {"T": scene.T, "C": scene.C, "H": scene.H, "W": scene.W},
        "bands": [
            {
                "name": band.name,
                "modality": band.modality.value,
                "valid_range": list(band.valid_range),
            }
            for band in scene.bands
        ],
        "modalities": [m.value for m in modalities],
        "dates": scene.dates,
    }
    _write_meta(directory, meta)
    _write_raw(directory / DATA_FILE, scene.data, _F32)
    for modality in modalities:
        _write_raw(directory / mask_file_name(modality), scene.clear_mask[modality], _U8)
    logger.debug("wrote stack %s dims=%s", directory, meta["dims"])


def read_stack(path: PathLike) -> Scene:
    """
    コンテナからSceneを読み込み、全不変条件を検証

    Raises:
        CorruptContainerError: ファイル欠落・サイズ不整合
        UnsupportedVersionError: 未対応のバージョン・レイアウト・エンコーディング
        InvalidDateError: 日付ラベルが ISO 8601 でない
        InvariantViolationError: Scene不変条件違反
    """
    directory = Path(path)
    meta = _read_meta(directory, "scene", "TCHW", "f32le")
    T, C, H, W = _dims(meta, ("T", "C", "H", "W"))

    try:
        bands = [BandSpec(**spec) for spec in meta.get("bands", [])]
        modalities = [Modality(m) for m in meta.get("modalities", [])]
    except (ValidationError, ValueError, TypeError) as e:
        raise InvariantViolationError(f"invalid band metadata: {e}") from e
    if len(bands) != C:
        raise CorruptContainerError(f"meta declares C={C} but lists {len(bands)} bands")

    dates = _check_dates(meta.get("dates"), str(directory))
    data = _read_raw(directory / DATA_FILE, _F32, (T, C, H, W)).astype(np.float32)
    masks = {
        m: _read_raw(directory / mask_file_name(m), _U8, (T, H, W)) for m in modalities
    }
    try:
        return Scene(bands=bands, data=data, clear_mask=masks, dates=dates)
    except ValidationError as e:
        raise InvariantViolationError(str(e)) from e


# ---- マスク ----

def write_mask(mask: np.ndarray, path: PathLike) -> None:
    """[T][H][W] マスクコンテナを書き込む"""
    mask = as_mask(mask)
    if mask.ndim != 3:
        raise ShapeMismatchError(f"mask must be [T][H][W], got shape {mask.shape}")
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    T, H, W = mask.shape
    _write_meta(directory, {
        "format_version": FORMAT_VERSION,
        "kind": "mask",
        "layout": "THW",
        "value_encoding": "u8",
        "dims": {"T": T, "H": H, "W": W},
    })
    _write_raw(directory / MASK_FILE, mask, _U8)


def read_mask(path: PathLike) -> np.ndarray:
    """マスクコンテナを読み込む"""
    directory = Path(path)
    meta = _read_meta(directory, "mask", "THW", "u8")
    shape = _dims(meta, ("T", "H", "W"))
    mask = _read_raw(directory / MASK_FILE, _U8, shape)
    try:
        return as_mask(mask)
    except ValueError as e:
        raise InvariantViolationError(f"{directory}: {e}") from e


def list_mask_library(path: PathLike) -> List[Path]:
    """マスクライブラリ内のエントリ（名前順）"""
    directory = Path(path)
    if not directory.is_dir():
        raise CorruptContainerError(f"mask library {directory} is not a directory")
    entries = sorted(p for p in directory.iterdir() if (p / META_FILE).is_file())
    if not entries:
        raise CorruptContainerError(f"mask library {directory} has no entries")
    return entries


def sample_library_mask(path: PathLike, T: int, H: int, W: int, seed: int) -> np.ndarray:
    """
    ライブラリから日ごとに (エントリ, 日) をシード付きで抽選し [T][H][W] マスクを作る

    Raises:
        ShapeMismatchError: ライブラリマスクの H, W がシーンと異なる
    """
    paths = list_mask_library(path)
    entries = [read_mask(p) for p in paths]
    for entry_path, mask in zip(paths, entries):
        if mask.shape[1:] != (H, W):
            raise ShapeMismatchError(
                f"library mask {entry_path.name} has grid {mask.shape[1:]}, scene needs {(H, W)}"
            )
    rng = np.random.default_rng(seed)
    days = []
    for _ in range(T):
        entry = entries[int(rng.integers(len(entries)))]
        days.append(entry[int(rng.integers(entry.shape[0]))])
    return np.stack(days).astype(np.uint8)


# ---- ホールドアウト ----

def write_holdout(holdout: np.ndarray, directory: PathLike) -> Path:
    """holdout.bin を書き込む"""
    path = Path(directory) / HOLDOUT_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_raw(path, as_mask(holdout), _U8)
    return path


def read_holdout(path: PathLike, shape: Tuple[int, int, int]) -> np.ndarray:
    """
    holdout.bin を読み込む（ディレクトリ指定時はその中の holdout.bin）

    Raises:
        CorruptContainerError: サイズがシーンの [T][H][W] と一致しない
    """
    path = Path(path)
    if path.is_dir():
        path = path / HOLDOUT_FILE
    holdout = _read_raw(path, _U8, tuple(shape))
    try:
        return as_mask(holdout)
    except ValueError as e:
        raise InvariantViolationError(f"{path}: {e}") from e


# ---- 指数ラスタ ----

class IndexRaster(BaseModel):
    """1日分の単バンド指数画像と晴天マスク"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    index_type: str
    day: int
    date: Optional[str] = None
    data: np.ndarray
    mask: np.ndarray


def write_index(raster: IndexRaster, path: PathLike) -> None:
    """指数ラスタコンテナを書き込む"""
    _check_finite(raster.data, "index data")
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    H, W = raster.data.shape
    _write_meta(directory, {
        "format_version": FORMAT_VERSION,
        "kind": "index",
        "layout": "HW",
        "value_encoding": "f32le",
        "dims": {"H": H, "W": W},
        "index_type": raster.index_type,
        "day": raster.day,
        "date": raster.date,
    })
    _write_raw(directory / DATA_FILE, raster.data, _F32)
    _write_raw(directory / MASK_FILE, raster.mask, _U8)


def read_index(path: PathLike) -> IndexRaster:
    """指数ラスタコンテナを読み込む"""
    directory = Path(path)
    meta = _read_meta(directory, "index", "HW", "f32le")
    shape = _dims(meta, ("H", "W"))
    return IndexRaster(
        index_type=str(meta.get("index_type")),
        day=int(meta.get("day", 0)),
        date=meta.get("date"),
        data=_read_raw(directory / DATA_FILE, _F32, shape).astype(np.float32),
        mask=_read_raw(directory / MASK_FILE, _U8, shape),
    )
