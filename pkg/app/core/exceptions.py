"""
例外クラス定義

全モジュール共通のカスタム例外階層。Fail-Fast原則に従い、
異常は修復せず明示的な例外として呼び出し元へ伝播させる。
"""


class CloudFillError(Exception):
    """全エラーのベースクラス"""
    pass


# 形状・引数エラー
class ShapeMismatchError(CloudFillError, ValueError):
    """配列形状の不一致"""
    pass


class InvalidDimensionError(CloudFillError, ValueError):
    """次元数が要件を満たさない（例: T < 2）"""
    pass


class InvalidAlphaError(CloudFillError, ValueError):
    """減衰係数αが負、または演算子と設定で食い違う"""
    pass


class InvariantViolationError(CloudFillError, ValueError):
    """Scene不変条件違反（値域外の観測値、マスク値が{0,1}以外など）"""
    pass


class InfeasibleSpecError(CloudFillError, ValueError):
    """合成シーン仕様が実現不能"""
    pass


class MissingBandError(CloudFillError, ValueError):
    """指数計算に必要なバンドが存在しない"""
    pass


# ソルバーエラー
class SolverError(CloudFillError):
    """ソルバー実行時エラーのベースクラス"""
    pass


class RankTooLargeError(SolverError, ValueError):
    """指定ランクが行列次元を超える"""
    pass


class SingularGramError(SolverError):
    """グラム行列が数値的に特異（ランク崩壊）"""
    pass


class NoValidPositionsError(CloudFillError, ValueError):
    """注意機構のマスクが全て0"""
    pass


# 評価指標エラー
class MetricError(CloudFillError, ValueError):
    """評価指標計算エラーのベースクラス"""
    pass


class EmptySelectorError(MetricError):
    """評価対象画素が空"""
    pass


class DegenerateVarianceError(MetricError):
    """分散0の系列に対する相関計算"""
    pass


# コンテナI/Oエラー
class ContainerIOError(CloudFillError):
    """スタックコンテナI/Oエラーのベースクラス"""
    pass


class RejectedValueError(ContainerIOError, ValueError):
    """ディスクに書き込めない値（NaN等）"""
    pass


class CorruptContainerError(ContainerIOError):
    """メタデータとファイルサイズの不整合、ファイル欠落"""
    pass


class UnsupportedVersionError(ContainerIOError):
    """未対応のformat_version / layout / encoding"""
    pass


class InvalidDateError(ContainerIOError, ValueError):
    """ISO 8601 (YYYY-MM-DD) として解釈できない日付ラベル"""
    pass
