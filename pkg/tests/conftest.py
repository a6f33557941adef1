"""
Test configuration for cloudfill

- テスト環境統一設定（環境変数の隔離、ログ出力先を一時ディレクトリへ）
- シングルトン（設定・ロガー・逆行列カウンタ）のリセット
- 共通fixture（小さなScene・合成シーン）
"""
import os
from unittest.mock import patch

import numpy as np
import pytest

from app.core.logger import reset_logger
from app.core.settings import reset_settings
from app.solvers.temporal import reset_inverse_computation_count
from app.stack.model import BandSpec, Modality, Scene
from app.synth.generator import SynthSpec, synth_scene


@pytest.fixture(autouse=True)
def setup_test_environment(tmp_path):
    """
    全テスト共通の環境設定

    ログファイルは tmp_path 配下
    """
    log_dir = tmp_path / "logs"
    test_env = {
        "LOG_SYSTEM_LOG_PATH": str(log_dir / "system.jsonl"),
        "LOG_SOLVER_LOG_PATH": str(log_dir / "solver.jsonl"),
        "LOG_ERROR_LOG_PATH": str(log_dir / "error.jsonl"),
    }

    with patch.dict(os.environ, test_env):
        reset_settings()
        reset_logger()
        reset_inverse_computation_count()
        yield
        reset_logger()
        reset_settings()


@pytest.fixture
def rng():
    """シード固定の乱数生成器"""
    return np.random.default_rng(12345)


def make_scene(
    rng: np.random.Generator,
    T: int = 3,
    C1: int = 2,
    C2: int = 1,
    H: int = 2,
    W: int = 2,
    cloud_fraction: float = 0.3,
) -> Scene:
    """ランダム値・ランダム雲の小さなScene"""
    bands = [BandSpec.optical(f"OPT{i}") for i in range(C1)]
    bands += [BandSpec.sar(f"SAR{i}") for i in range(C2)]
    optical_mask = (rng.random((T, H, W)) >= cloud_fraction).astype(np.uint8)
    masks = {Modality.OPTICAL: optical_mask}
    data = np.empty((T, C1 + C2, H, W), dtype=np.float32)
    data[:, :C1] = rng.uniform(0.0, 1.0, size=(T, C1, H, W)) * optical_mask[:, None]
    if C2:
        masks[Modality.SAR] = np.ones((T, H, W), dtype=np.uint8)
        data[:, C1:] = rng.uniform(-1.0, 1.0, size=(T, C2, H, W))
    return Scene(bands=bands, data=data, clear_mask=masks)


@pytest.fixture
def small_scene(rng):
    return make_scene(rng)


@pytest.fixture
def synth_small():
    """ノイズなしの小さな合成シーン（雲量比0.4）"""
    spec = SynthSpec(seed=3, rank=2, T=6, C1=4, C2=2, H=12, W=12, target_cloud_ratio=0.4)
    return synth_scene(spec)
