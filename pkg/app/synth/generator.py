"""
合成シーン生成（埋め込み低ランク真値）

データモデル X* = U* V*ᵀ
- U*: 土地被覆タイプごとの時間シグネチャ（小さな増分の累積和による滑らかな曲線）
- V*: 画素ごとの混合係数（ぼかした乱数場のソフトマックス、各行の和が1）

V* が凸結合なので、U* を値域内に収めれば積も値域内に収まり、ランクは厳密に Nr
"""
import logging
from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from app.core.exceptions import InfeasibleSpecError
from app.core.settings import SynthConfig, get_settings
from app.stack.model import BandSpec, Modality, Scene

logger = logging.getLogger(__name__)

SENTINEL2_BANDS = [
    "B2-Blue", "B3-Green", "B4-Red", "B5-RedEdge1", "B6-RedEdge2",
    "B7-RedEdge3", "B8-NIR", "B8A-NarrowNIR", "B11-SWIR1", "B12-SWIR2",
]
SENTINEL1_BANDS = ["VV", "VH"]

# シグネチャの値域（クランプ不要な内側の範囲）
_OPTICAL_LEVEL = (0.05, 0.95)
_SAR_LEVEL = (-0.9, 0.9)
# 混合マップの空間相関長（画素）と鋭さ
_MIXTURE_SIGMA = 4.0
_MIXTURE_SHARPNESS = 3.0


class CloudModel(str, Enum):
    """合成雲の生成方式"""
    RANDOM_BLOBS = "blobs"
    STORED_LIBRARY = "library"


class SynthSpec(BaseModel):
    """合成シーン仕様"""
    seed: int = Field(default=0, ge=0)
    rank: int = Field(default=3, ge=1, description="埋め込みランク Nr_true")
    T: int = Field(default=12, ge=2)
    C1: int = Field(default=4, ge=1)
    C2: int = Field(default=2, ge=0)
    H: int = Field(default=32, ge=1)
    W: int = Field(default=32, ge=1)
    noise_sigma: float = Field(default=0.0, ge=0.0)
    cloud_model: CloudModel = CloudModel.RANDOM_BLOBS
    target_cloud_ratio: float = Field(default=0.0, ge=0.0, le=0.99)
    ellipses_per_day: int = Field(default=6, ge=1)
    signature_step: float = Field(default=0.01, gt=0.0)

    @classmethod
    def from_config(cls, cfg: Optional[SynthConfig] = None, **overrides) -> "SynthSpec":
        """SynthConfig（環境変数・デフォルト）から仕様を作る"""
        cfg = cfg or get_settings().synth
        values = {
            "seed": cfg.seed,
            "rank": cfg.rank,
            "T": cfg.T,
            "C1": cfg.C1,
            "C2": cfg.C2,
            "H": cfg.H,
            "W": cfg.W,
            "noise_sigma": cfg.noise,
            "target_cloud_ratio": cfg.target_ratio,
            "ellipses_per_day": cfg.ellipses_per_day,
            "signature_step": cfg.signature_step,
        }
        values.update(overrides)
        return cls(**values)


class SynthResult(BaseModel):
    """
    生成結果

    truth: ノイズなし全画素観測のScene
    observed: ノイズ付き・雲マスク適用済みのScene
    cloud_mask: 光学マスク [T][H][W]
    U, V, product: 埋め込み因子とその積（float64、クランプ前）
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    truth: Scene
    observed: Scene
    cloud_mask: np.ndarray
    U: np.ndarray
    V: np.ndarray
    product: np.ndarray


def band_names(C1: int, C2: int) -> List[BandSpec]:
    """光学はSentinel-2名、SARはVV/VHを優先して割り当て"""
    optical = [
        SENTINEL2_BANDS[i] if i < len(SENTINEL2_BANDS) else f"OPT{i}" for i in range(C1)
    ]
    sar = [SENTINEL1_BANDS[i] if i < len(SENTINEL1_BANDS) else f"SAR{i}" for i in range(C2)]
    return [BandSpec.optical(n) for n in optical] + [BandSpec.sar(n) for n in sar]


def _signatures(rng: np.random.Generator, spec: SynthSpec) -> np.ndarray:
    """U*: 行 t·C + c、列 r の時間シグネチャ"""
    C = spec.C1 + spec.C2
    lows = np.array([_OPTICAL_LEVEL[0]] * spec.C1 + [_SAR_LEVEL[0]] * spec.C2)
    highs = np.array([_OPTICAL_LEVEL[1]] * spec.C1 + [_SAR_LEVEL[1]] * spec.C2)

    base = rng.uniform(0.2, 0.8, size=(C, spec.rank))
    base = lows[:, None] + base * (highs - lows)[:, None]
    steps = rng.normal(0.0, spec.signature_step, size=(spec.T, C, spec.rank))
    steps[0] = 0.0
    curves = base[None] + np.cumsum(steps, axis=0)
    curves = np.clip(curves, lows[None, :, None], highs[None, :, None])
    return curves.reshape(spec.T * C, spec.rank)


def _mixtures(rng: np.random.Generator, spec: SynthSpec) -> np.ndarray:
    """V*: 行 h·W + w の凸結合係数"""
    fields = []
    for _ in range(spec.rank):
        noise = rng.standard_normal((spec.H, spec.W))
        smooth = ndimage.gaussian_filter(noise, sigma=_MIXTURE_SIGMA, mode="wrap")
        spread = smooth.std()
        fields.append((smooth - smooth.mean()) / (spread if spread > 0 else 1.0))
    logits = _MIXTURE_SHARPNESS * np.stack(fields, axis=-1).reshape(spec.H * spec.W, spec.rank)
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=1, keepdims=True)


def synth_cloud_blobs(
    seed: int,
    H: int,
    W: int,
    T: int,
    target_ratio: float,
    ellipses_per_day: Optional[int] = None,
) -> np.ndarray:
    """
    日ごとのランダム楕円の和集合による雲マスク [T][H][W]

    楕円スコアの上位 round(target·HW) 画素を雲とするため、各日の雲量比は目標と一致する
    """
    if not 0.0 <= target_ratio <= 0.99:
        raise InfeasibleSpecError(f"target_ratio must be in [0, 0.99], got {target_ratio}")
    count = ellipses_per_day or get_settings().synth.ellipses_per_day
    rng = np.random.default_rng(seed)
    n_cloudy = int(round(target_ratio * H * W))
    yy, xx = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")

    mask = np.ones((T, H, W), dtype=np.uint8)
    for t in range(T):
        centers = rng.uniform((0, 0), (H, W), size=(count, 2))
        axes = rng.uniform(0.1, 0.4, size=(count, 2)) * (H, W) + 0.5
        angles = rng.uniform(0, np.pi, size=count)
        score = np.full((H, W), -np.inf)
        for (cy, cx), (ay, ax), theta in zip(centers, axes, angles):
            dy, dx = yy - cy, xx - cx
            u = dy * np.cos(theta) + dx * np.sin(theta)
            v = -dy * np.sin(theta) + dx * np.cos(theta)
            score = np.maximum(score, 1.0 - np.sqrt((u / ay) ** 2 + (v / ax) ** 2))
        if n_cloudy:
            order = np.argsort(-score.ravel(), kind="stable")
            mask[t].ravel()[order[:n_cloudy]] = 0
    return mask


def synth_scene(spec: SynthSpec, cloud_mask: Optional[np.ndarray] = None) -> SynthResult:
    """
    埋め込み低ランク真値を持つ合成シーン

    cloud_mask 省略時は RANDOM_BLOBS で目標雲量比の光学マスクを生成（SARは常に全観測）

    Raises:
        InfeasibleSpecError: Nr_true > min((C1+C2)T, HW)、マスク形状不一致、ライブラリ指定でマスク未指定
    """
    C = spec.C1 + spec.C2
    if spec.rank > min(C * spec.T, spec.H * spec.W):
        raise InfeasibleSpecError(
            f"rank {spec.rank} exceeds min((C1+C2)T, HW) = {min(C * spec.T, spec.H * spec.W)}"
        )

    rng = np.random.default_rng(spec.seed)
    U = _signatures(rng, spec)
    V = _mixtures(rng, spec)
    product = U @ V.T

    bands = band_names(spec.C1, spec.C2)
    lower = np.tile([b.valid_range[0] for b in bands], spec.T)[:, None]
    upper = np.tile([b.valid_range[1] for b in bands], spec.T)[:, None]
    truth_values = np.clip(product, lower, upper)
    noisy = product + rng.normal(0.0, spec.noise_sigma, size=product.shape) if spec.noise_sigma else product
    observed_values = np.clip(noisy, lower, upper)

    shape = (spec.T, C, spec.H, spec.W)
    grid = (spec.T, spec.H, spec.W)
    if cloud_mask is None:
        if spec.cloud_model is CloudModel.STORED_LIBRARY:
            raise InfeasibleSpecError("library cloud model needs an explicit cloud mask")
        cloud_mask = synth_cloud_blobs(
            spec.seed + 1, spec.H, spec.W, spec.T, spec.target_cloud_ratio, spec.ellipses_per_day
        )
    cloud_mask = np.asarray(cloud_mask, dtype=np.uint8)
    if cloud_mask.shape != grid:
        raise InfeasibleSpecError(f"cloud mask shape {cloud_mask.shape} != {grid}")

    clear = {Modality.OPTICAL: np.ones(grid, dtype=np.uint8)}
    if spec.C2:
        clear[Modality.SAR] = np.ones(grid, dtype=np.uint8)
    truth = Scene(bands=bands, data=truth_values.reshape(shape), clear_mask=clear)

    observed_data = observed_values.reshape(shape).astype(np.float32)
    observed_data[:, : spec.C1] = np.where(cloud_mask[:, None] == 1, observed_data[:, : spec.C1], 0.0)
    observed_masks = dict(clear)
    observed_masks[Modality.OPTICAL] = cloud_mask
    observed = Scene(bands=bands, data=observed_data, clear_mask=observed_masks)

    logger.debug(
        "synthesized scene seed=%d rank=%d dims=%s cloud_ratio=%.3f",
        spec.seed, spec.rank, shape, float(np.mean(cloud_mask == 0)),
    )
    return SynthResult(
        truth=truth, observed=observed, cloud_mask=cloud_mask, U=U, V=V, product=product
    )
