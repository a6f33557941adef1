"""
Stack model for cloudfill

光学・SARの時空間画像スタックとそのマスクのデータモデル

実装機能:
- BandSpec: バンド名・モダリティ・値域
- Scene: [t][c][h][w] テンソル + モダリティ別の晴天マスク [t][h][w]
- ObservationMatrix: 行 = t·C + c（時間優先）、列 = h·W + w の行列表現
- matricize / dematricize: 完全可逆な相互変換

Scene / ObservationMatrix は構築後イミュータブル（配列は読み取り専用ビュー）
"""
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.exceptions import ShapeMismatchError

ROW_LAYOUT = "row index = t·(C1+C2) + c"
COL_LAYOUT = "col index = h·W + w"


class Modality(str, Enum):
    """観測モダリティ"""
    OPTICAL = "optical"
    SAR = "sar"


VALID_RANGES: Dict[Modality, Tuple[float, float]] = {
    Modality.OPTICAL: (0.0, 1.0),
    Modality.SAR: (-1.0, 1.0),
}


def _readonly(array: np.ndarray) -> np.ndarray:
    """呼び出し元の配列フラグを変えずに読み取り専用ビューを返す"""
    view = array.view()
    view.flags.writeable = False
    return view


class BandSpec(BaseModel):
    """バンド定義（名前・モダリティ・値域）"""
    model_config = ConfigDict(frozen=True)

    name: str = Field(..., min_length=1, description="バンド名（例: B4-Red）")
    modality: Modality = Field(..., description="モダリティ")
    valid_range: Tuple[float, float] = Field(default=None, description="閉区間の値域")

    @model_validator(mode="before")
    @classmethod
    def fill_valid_range(cls, data):
        if isinstance(data, dict) and data.get("valid_range") is None and "modality" in data:
            data = dict(data)
            data["valid_range"] = VALID_RANGES[Modality(data["modality"])]
        return data

    @model_validator(mode="after")
    def check_valid_range(self) -> "BandSpec":
        expected = VALID_RANGES[self.modality]
        if tuple(float(v) for v in self.valid_range) != expected:
            raise ValueError(
                f"band {self.name}: {self.modality.value} bands must have valid_range {expected}"
            )
        return self

    @classmethod
    def optical(cls, name: str) -> "BandSpec":
        return cls(name=name, modality=Modality.OPTICAL)

    @classmethod
    def sar(cls, name: str) -> "BandSpec":
        return cls(name=name, modality=Modality.SAR)

    @property
    def code(self) -> str:
        """Sentinel-2式バンドコード（"B8-NIR" → "B8"）"""
        return self.name.split("-", 1)[0]


class Scene(BaseModel):
    """
    位置合わせ済みマルチモーダル時空間ラスタ

    Invariants:
        - data は float32 [T][C][H][W]、マスクは uint8 {0,1} [T][H][W]
        - マスク1の位置ではバンド値域内、マスク0の位置は0
        - T ≥ 2, H ≥ 1, W ≥ 1, 光学バンド1本以上
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    bands: List[BandSpec]
    data: np.ndarray
    clear_mask: Dict[Modality, np.ndarray]
    dates: Optional[List[str]] = None

    @field_validator("data", mode="before")
    @classmethod
    def coerce_data(cls, v):
        array = np.asarray(v)
        if array.dtype != np.float32:
            array = array.astype(np.float32)
        if array.ndim != 4:
            raise ValueError(f"data must be 4-D [T][C][H][W], got shape {array.shape}")
        return _readonly(np.ascontiguousarray(array))

    @field_validator("clear_mask", mode="before")
    @classmethod
    def coerce_masks(cls, v):
        masks = {}
        for key, value in dict(v).items():
            array = np.asarray(value)
            if not np.isin(array, (0, 1)).all():
                raise ValueError(f"mask for {key} must contain only 0/1")
            masks[Modality(key)] = _readonly(np.ascontiguousarray(array.astype(np.uint8)))
        return masks

    @model_validator(mode="after")
    def check_invariants(self) -> "Scene":
        T, C, H, W = self.data.shape
        if T < 2 or H < 1 or W < 1:
            raise ValueError(f"scene dims must satisfy T>=2, H>=1, W>=1, got {self.data.shape}")
        if C != len(self.bands):
            raise ValueError(f"data has {C} channels but {len(self.bands)} bands given")
        names = [band.name for band in self.bands]
        if len(set(names)) != len(names):
            raise ValueError("band names must be unique")
        if not any(band.modality is Modality.OPTICAL for band in self.bands):
            raise ValueError("scene needs at least one optical band")
        if self.dates is not None and len(self.dates) != T:
            raise ValueError(f"{len(self.dates)} dates given for T={T}")

        present = {band.modality for band in self.bands}
        if set(self.clear_mask) != present:
            raise ValueError(
                f"masks given for {sorted(m.value for m in self.clear_mask)}, "
                f"bands need {sorted(m.value for m in present)}"
            )
        for modality, mask in self.clear_mask.items():
            if mask.shape != (T, H, W):
                raise ValueError(f"{modality.value} mask shape {mask.shape} != {(T, H, W)}")

        if not np.isfinite(self.data).all():
            raise ValueError("data contains non-finite values")
        for c, band in enumerate(self.bands):
            mask = self.clear_mask[band.modality].astype(bool)
            values = self.data[:, c]
            if np.any(values[~mask] != 0):
                raise ValueError(f"band {band.name}: masked entries must be stored as 0")
            lo, hi = band.valid_range
            observed = values[mask]
            if observed.size and (observed.min() < lo or observed.max() > hi):
                raise ValueError(f"band {band.name}: observed values outside [{lo}, {hi}]")
        return self

    # 次元アクセサ
    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def C(self) -> int:
        return self.data.shape[1]

    @property
    def H(self) -> int:
        return self.data.shape[2]

    @property
    def W(self) -> int:
        return self.data.shape[3]

    @property
    def optical_indices(self) -> List[int]:
        return [c for c, band in enumerate(self.bands) if band.modality is Modality.OPTICAL]

    @property
    def sar_indices(self) -> List[int]:
        return [c for c, band in enumerate(self.bands) if band.modality is Modality.SAR]

    @property
    def C1(self) -> int:
        return len(self.optical_indices)

    @property
    def C2(self) -> int:
        return len(self.sar_indices)

    def band_mask(self, c: int) -> np.ndarray:
        """バンドcに対応するモダリティの晴天マスク [T][H][W]"""
        return self.clear_mask[self.bands[c].modality]

    def mask_tensor(self) -> np.ndarray:
        """バンドごとに展開したマスク [T][C][H][W]"""
        return np.stack([self.band_mask(c) for c in range(self.C)], axis=1)

    def band_index(self, name: str) -> int:
        for c, band in enumerate(self.bands):
            if band.name == name:
                return c
        raise KeyError(name)

    def with_optical_mask(self, mask: np.ndarray) -> "Scene":
        """光学マスクを差し替え、新たに雲となった光学値を0にしたSceneを返す"""
        mask = np.asarray(mask, dtype=np.uint8)
        if mask.shape != (self.T, self.H, self.W):
            raise ShapeMismatchError(
                f"mask shape {mask.shape} != {(self.T, self.H, self.W)}"
            )
        data = np.array(self.data, copy=True)
        for c in self.optical_indices:
            data[:, c][mask == 0] = 0.0
        masks = dict(self.clear_mask)
        masks[Modality.OPTICAL] = mask
        return Scene(bands=self.bands, data=data, clear_mask=masks, dates=self.dates)

    def equals(self, other: "Scene") -> bool:
        """ビット単位の完全一致（-0.0 と 0.0 も区別）"""
        if not isinstance(other, Scene):
            return False
        if self.bands != other.bands or self.dates != other.dates:
            return False
        if self.data.shape != other.data.shape:
            return False
        if not np.array_equal(self.data.view(np.uint32), other.data.view(np.uint32)):
            return False
        if set(self.clear_mask) != set(other.clear_mask):
            return False
        return all(
            np.array_equal(self.clear_mask[m], other.clear_mask[m]) for m in self.clear_mask
        )

    def __eq__(self, other: object) -> bool:
        return self.equals(other)  # type: ignore[arg-type]

    __hash__ = None  # type: ignore[assignment]


class ObservationMatrix(BaseModel):
    """
    行列化ビュー Y ∈ R^{(C1+C2)T × HW} とマスク行列 M

    時刻tのブロック X_t は連続するC行
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    Y: np.ndarray
    M: np.ndarray
    T: int = Field(..., ge=2)
    H: int = Field(..., ge=1)
    W: int = Field(..., ge=1)
    modalities: List[Modality] = Field(..., min_length=1, description="チャネルごとのモダリティ")
    row_layout: str = ROW_LAYOUT
    col_layout: str = COL_LAYOUT

    @field_validator("Y", mode="before")
    @classmethod
    def coerce_y(cls, v):
        return _readonly(np.ascontiguousarray(np.asarray(v, dtype=np.float64)))

    @field_validator("M", mode="before")
    @classmethod
    def coerce_m(cls, v):
        array = np.asarray(v)
        if not np.isin(array, (0, 1)).all():
            raise ValueError("M must contain only 0/1")
        return _readonly(np.ascontiguousarray(array.astype(np.float64)))

    @model_validator(mode="after")
    def check_shape(self) -> "ObservationMatrix":
        expected = (self.T * self.C, self.H * self.W)
        if self.Y.shape != expected or self.M.shape != expected:
            raise ValueError(
                f"Y {self.Y.shape} / M {self.M.shape} inconsistent with expected {expected}"
            )
        if np.any(self.Y[self.M == 0] != 0):
            raise ValueError("Y must be 0 wherever M is 0")
        return self

    @property
    def C(self) -> int:
        return len(self.modalities)

    def row_selector(self, modality: Modality) -> np.ndarray:
        """指定モダリティに属する行のブール配列"""
        per_channel = np.array([m is modality for m in self.modalities])
        return np.tile(per_channel, self.T)

    @property
    def optical_rows(self) -> np.ndarray:
        return self.row_selector(Modality.OPTICAL)

    def row_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """各行の値域（下限, 上限）"""
        lower = np.array([VALID_RANGES[m][0] for m in self.modalities])
        upper = np.array([VALID_RANGES[m][1] for m in self.modalities])
        return np.tile(lower, self.T), np.tile(upper, self.T)

    def time_slice(self, t: int) -> np.ndarray:
        """時刻tの (C, HW) ブロック X_t"""
        return self.Y[t * self.C:(t + 1) * self.C]


def matricize(scene: Scene) -> ObservationMatrix:
    """
    Scene を行列化する

    Y[t·C + c, h·W + w] = data[t][c][h][w]、Mはバンドのモダリティのマスクを複製
    """
    T, C, H, W = scene.data.shape
    Y = scene.data.astype(np.float64).reshape(T * C, H * W)
    M = scene.mask_tensor().reshape(T * C, H * W)
    return ObservationMatrix(
        Y=Y,
        M=M,
        T=T,
        H=H,
        W=W,
        modalities=[band.modality for band in scene.bands],
    )


def _check_template(rows: int, cols: int, template: Scene) -> None:
    expected = (template.T * template.C, template.H * template.W)
    if (rows, cols) != expected:
        raise ShapeMismatchError(
            f"matrix shape {(rows, cols)} does not match template {expected}"
        )


def dematricize(mat: ObservationMatrix, template: Scene) -> Scene:
    """
    matricize の逆変換。マスク・バンド・日付はテンプレートから複製

    Raises:
        ShapeMismatchError: 次元不一致
    """
    _check_template(*mat.Y.shape, template)
    if (mat.T, mat.C, mat.H, mat.W) != template.data.shape:
        raise ShapeMismatchError(
            f"matrix dims {(mat.T, mat.C, mat.H, mat.W)} != template {template.data.shape}"
        )
    data = mat.Y.reshape(template.data.shape).astype(np.float32)
    return Scene(
        bands=template.bands,
        data=data,
        clear_mask=template.clear_mask,
        dates=template.dates,
    )


def reconstructed_scene(
    X: np.ndarray,
    template: Scene,
    filled: Iterable[Modality],
) -> Scene:
    """
    再構成行列からSceneを作る

    補完したモダリティは全画素晴天扱い、それ以外は元のマスクと観測値を保持
    """
    X = np.asarray(X)
    _check_template(*X.shape, template)
    filled = set(filled)
    data = X.reshape(template.data.shape).astype(np.float32)
    masks = {}
    for modality, mask in template.clear_mask.items():
        if modality in filled:
            masks[modality] = np.ones_like(mask)
        else:
            masks[modality] = mask
            for c, band in enumerate(template.bands):
                if band.modality is modality:
                    data[:, c] = template.data[:, c]
    return Scene(bands=template.bands, data=data, clear_mask=masks, dates=template.dates)
