"""
Synth module for cloudfill

埋め込み低ランク真値を持つ合成シーンと合成雲マスクの生成
"""

from .generator import (
    CloudModel,
    SynthResult,
    SynthSpec,
    band_names,
    synth_cloud_blobs,
    synth_scene,
)

__all__ = [
    "CloudModel",
    "SynthResult",
    "SynthSpec",
    "band_names",
    "synth_cloud_blobs",
    "synth_scene",
]
