"""
Settings module for cloudfill

Pydantic設定管理、環境変数読み込み、Field制約による堅牢なバリデーション機能を提供

実装機能:
- .envファイル統合読み込み（UTF-8エンコーディング対応）
- 環境変数プレフィックス分離（DAMPED_, MC_, MASK_, など）
- 設定グループごとの独立した環境変数管理
- CLIフラグはキーワード引数で環境変数・デフォルト値を上書き
- Field制約による数値範囲バリデーション
"""
from enum import Enum
from typing import Literal, Optional
import logging

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


def _group_config(prefix: str) -> SettingsConfigDict:
    """設定グループ共通の読み込み設定（.env + プレフィックス分離）"""
    return SettingsConfigDict(
        env_prefix=prefix, env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )


class InitMethod(str, Enum):
    """行列補完の初期化方式"""
    SVD = "svd"
    RANDOM = "random"


class DampedConfig(BaseSettings):
    """
    減衰補間ソルバー設定

    α=0.5 は光学バンドのみを入力とする減衰補間の推奨値
    """
    model_config = _group_config("DAMPED_")

    # DAMPED_ALPHA: 0以上、デフォルト0.5
    alpha: float = Field(
        default=0.5,
        ge=0.0,
        description="時間平滑化の減衰係数α"
    )
    max_iters: int = Field(
        default=500,
        ge=1,
        description="固定点反復の最大回数"
    )
    rel_tol: float = Field(
        default=1e-6,
        gt=0.0,
        description="目的関数の相対変化による収束判定閾値"
    )
    optical_only: bool = Field(
        default=True,
        description="光学バンドの行のみを補間する"
    )


class MCConfig(BaseSettings):
    """
    ランク制約付き行列補完設定

    rank=35, α=3 が推奨値。初期化はSVD（決定的）、seedはランダム初期化時のみ使用
    """
    model_config = _group_config("MC_")

    rank: int = Field(
        default=35,
        ge=1,
        description="因子ランク Nr"
    )
    alpha: float = Field(
        default=3.0,
        ge=0.0,
        description="時間平滑化の減衰係数α"
    )
    max_iters: int = Field(
        default=200,
        ge=1,
        description="交互最適化の最大ステップ数"
    )
    rel_tol: float = Field(
        default=1e-6,
        gt=0.0,
        description="目的関数の相対変化による収束判定閾値"
    )
    seed: int = Field(
        default=0,
        ge=0,
        description="ランダム初期化用シード"
    )
    init: InitMethod = Field(
        default=InitMethod.SVD,
        description="因子初期化方式"
    )
    gram_condition_limit: float = Field(
        default=1e12,
        gt=1.0,
        description="グラム行列の条件数上限（超過でSingularGramError）"
    )
    gram_jitter: float = Field(
        default=1e-12,
        ge=0.0,
        description="グラム行列対角に加えるtrace相対ジッター"
    )
    init_sweeps: int = Field(
        default=10,
        ge=0,
        description="初期化時の観測要素のみの最小二乗スイープ回数（平滑化項なし）"
    )


class MaskConfig(BaseSettings):
    """
    雲マスク後処理設定

    400画素未満の連結成分を除去、4近傍連結
    """
    model_config = _group_config("MASK_")

    min_component_size: int = Field(
        default=400,
        ge=1,
        description="保持する連結成分の最小画素数"
    )
    connectivity: Literal[4, 8] = Field(
        default=4,
        description="連結成分の近傍定義"
    )


class MetricsConfig(BaseSettings):
    """
    評価指標設定

    雲量比ビンは [0.3, 0.95] を8等分
    """
    model_config = _group_config("METRICS_")

    bin_count: int = Field(default=8, ge=1, le=100, description="雲量比ビン数")
    bin_low: float = Field(default=0.3, ge=0.0, le=1.0, description="ビン下端")
    bin_high: float = Field(default=0.95, ge=0.0, le=1.0, description="ビン上端")
    psnr_peak: float = Field(default=1.0, gt=0.0, description="PSNRのピーク値")
    nd_eps: float = Field(default=1e-8, gt=0.0, description="正規化差分指数の分母ガード")


class SynthConfig(BaseSettings):
    """
    合成シーン生成設定（simulateコマンドのデフォルト値）
    """
    model_config = _group_config("SYNTH_")

    seed: int = Field(default=0, ge=0, description="乱数シード")
    rank: int = Field(default=3, ge=1, description="埋め込みランク")
    T: int = Field(default=12, ge=2, description="日数")
    C1: int = Field(default=4, ge=1, description="光学バンド数")
    C2: int = Field(default=2, ge=0, description="SARバンド数")
    H: int = Field(default=32, ge=1, description="画像高さ")
    W: int = Field(default=32, ge=1, description="画像幅")
    noise: float = Field(default=0.01, ge=0.0, description="観測ノイズ標準偏差")
    target_ratio: float = Field(default=0.4, ge=0.0, le=0.99, description="目標雲量比")
    ellipses_per_day: int = Field(default=6, ge=1, le=64, description="1日あたりの雲楕円数")
    signature_step: float = Field(
        default=0.01,
        gt=0.0,
        le=0.2,
        description="時間シグネチャのランダムウォーク刻み幅"
    )


class LogConfig(BaseSettings):
    """
    StructuredLogger関連設定

    JSON形式ログファイル出力、ローテーション制御設定
    """
    model_config = _group_config("LOG_")

    system_log_path: str = Field(
        default="logs/system.jsonl",
        description="システムログファイルパス"
    )
    solver_log_path: str = Field(
        default="logs/solver.jsonl",
        description="ソルバーログファイルパス"
    )
    error_log_path: str = Field(
        default="logs/error.jsonl",
        description="エラーログファイルパス"
    )

    max_file_size_mb: int = Field(
        default=10,
        ge=1,
        le=100,
        description="ログファイル最大サイズ（MB）"
    )
    backup_count: int = Field(
        default=5,
        ge=1,
        le=30,
        description="ローテーション時のバックアップ数"
    )

    console_level: str = Field(
        default="WARNING",
        description="コンソール出力レベル"
    )

class Settings(BaseSettings):
    """
    cloudfill メイン設定クラス

    6つの設定グループを統合管理:
    - damped: 減衰補間ソルバー
    - mc: ランク制約付き行列補完
    - mask: 雲マスク後処理
    - metrics: 評価指標・雲量比ビン
    - synth: 合成シーン生成
    - log: 構造化ログ
    """
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
        validate_assignment=True
    )

    log_level: Optional[str] = Field(None, description="LOG_LEVELの直接読み込み")

    damped: DampedConfig = Field(default_factory=DampedConfig)
    mc: MCConfig = Field(default_factory=MCConfig)
    mask: MaskConfig = Field(default_factory=MaskConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    log: LogConfig = Field(default_factory=LogConfig)

    def model_post_init(self, __context) -> None:
        """LOG_LEVEL直接指定時はコンソールレベルに統合"""
        if self.log_level:
            self.log.console_level = self.log_level.upper()

    def console_level(self) -> int:
        """コンソールのloggingレベル値"""
        return getattr(logging, self.log.console_level.upper(), logging.WARNING)


# グローバル設定インスタンス（シングルトンパターン）
_settings_instance: Optional[Settings] = None


def get_settings() -> Settings:
    """
    設定インスタンスの取得（シングルトンパターン）

    Returns:
        Settings: 設定インスタンス
    """
    global _settings_instance
    if _settings_instance is None:
        _settings_instance = Settings()
    return _settings_instance


def reset_settings() -> None:
    """
    設定インスタンスのリセット（主にテスト用）
    """
    global _settings_instance
    _settings_instance = None
