"""
Settings tests for cloudfill

テスト対象: app/core/settings.py デフォルト値、環境変数読み込み、シングルトン
"""
import os
from unittest.mock import patch

from app.core.settings import (
    DampedConfig,
    InitMethod,
    MCConfig,
    Settings,
    get_settings,
    reset_settings,
)


class TestDefaults:
    """既定値のテスト"""

    def test_damped_defaults(self):
        """減衰補間: α=0.5、最大500反復、光学のみ"""
        cfg = DampedConfig()
        assert cfg.alpha == 0.5
        assert cfg.max_iters == 500
        assert cfg.rel_tol == 1e-6
        assert cfg.optical_only is True

    def test_mc_defaults(self):
        """行列補完: rank=35, α=3、SVD初期化"""
        cfg = MCConfig()
        assert cfg.rank == 35
        assert cfg.alpha == 3.0
        assert cfg.max_iters == 200
        assert cfg.init is InitMethod.SVD
        assert cfg.gram_condition_limit == 1e12
        assert cfg.init_sweeps == 10

    def test_settings_groups(self):
        """ルート設定が全グループを保持"""
        settings = Settings()
        assert settings.mask.min_component_size == 400
        assert settings.mask.connectivity == 4
        assert settings.metrics.bin_count == 8
        assert settings.metrics.bin_low == 0.3
        assert settings.metrics.bin_high == 0.95
        assert settings.synth.rank == 3


class TestEnvironmentLoading:
    """環境変数読み込みのテスト"""

    def test_prefixed_variables(self):
        """プレフィックス付き環境変数がグループへ反映される"""
        env = {"DAMPED_ALPHA": "0.25", "MC_RANK": "7", "MASK_CONNECTIVITY": "8"}
        with patch.dict(os.environ, env):
            settings = Settings()
        assert settings.damped.alpha == 0.25
        assert settings.mc.rank == 7
        assert settings.mask.connectivity == 8

    def test_keyword_overrides_environment(self):
        """キーワード引数（CLIフラグ）が環境変数より優先される"""
        with patch.dict(os.environ, {"MC_RANK": "7"}):
            cfg = MCConfig(rank=4)
        assert cfg.rank == 4

    def test_log_level_folds_into_console_level(self):
        """LOG_LEVEL はコンソールレベルに統合される"""
        with patch.dict(os.environ, {"LOG_LEVEL": "debug"}):
            settings = Settings()
        assert settings.log.console_level == "DEBUG"
        assert settings.console_level() == 10

    def test_unrelated_env_variable_ignored(self):
        """ENV などグループ外の変数は読み込まず保持もしない"""
        with patch.dict(os.environ, {"ENV": "production"}):
            settings = Settings()
        assert "env" not in Settings.model_fields
        assert not hasattr(settings, "env")

    def test_log_paths_point_to_test_directory(self, tmp_path):
        """conftestがログ出力先を一時ディレクトリへ向けている"""
        settings = get_settings()
        assert settings.log.solver_log_path.startswith(str(tmp_path))


class TestSingleton:
    """シングルトンのテスト"""

    def test_get_settings_returns_same_instance(self):
        assert get_settings() is get_settings()

    def test_reset_settings_rebuilds(self):
        first = get_settings()
        reset_settings()
        assert get_settings() is not first
