"""
cloudfill 構造化ログシステム

原則:
- Fail-Fast: ログ書き込み失敗時即停止・フォールバック禁止
- 設定一元管理: LogConfig経由設定制御
- 3系統のJSONLファイル: system / solver / error
"""

import json
import threading
import traceback
from concurrent.futures import Future, ThreadPoolExecutor
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class LogLevel(str, Enum):
    """ログレベル列挙"""

    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"


class SolverMethod(str, Enum):
    """再構成手法列挙"""

    LINEAR = "linear"
    DAMPED = "damped"
    MC = "mc"


class JsonlRecord(BaseModel):
    """JSONL 1行ぶんのログレコード基底"""

    timestamp: datetime = Field(default_factory=datetime.now)

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    @classmethod
    def from_json(cls, json_str: str) -> "JsonlRecord":
        return cls.model_validate_json(json_str)


class SolverLog(JsonlRecord):
    """
    ソルバーログ構造

    1回の求解につき1レコード、収束状況の要約
    """

    method: SolverMethod
    iterations: int = Field(..., ge=0)
    final_objective: Optional[float] = None
    converged: bool
    degenerate: bool = False
    empty_series: int = Field(default=0, ge=0)
    duration_ms: Optional[float] = None


class SystemLog(JsonlRecord):
    """コマンド実行状況・I/O・処理時間"""

    level: LogLevel
    module: str
    action: Optional[str] = None
    data: Optional[Dict[str, Any]] = None
    duration_ms: Optional[float] = None


class ErrorLog(JsonlRecord):
    """
    エラーログ構造

    例外・エラー詳細情報・スタックトレース記録
    """

    error_type: str
    message: str
    module: str
    function: Optional[str] = None
    stacktrace: Optional[str] = None
    context: Optional[Dict[str, Any]] = None

    @classmethod
    def from_exception(
        cls, exc: Exception, context: Optional[Dict[str, Any]] = None
    ) -> "ErrorLog":
        """例外からErrorLog生成"""
        frames = traceback.extract_tb(exc.__traceback__)
        return cls(
            error_type=type(exc).__name__,
            message=str(exc),
            module=exc.__class__.__module__,
            function=frames[-1].name if frames else None,
            stacktrace="".join(
                traceback.format_exception(type(exc), exc, exc.__traceback__)
            ),
            context=context or {},
        )


class StructuredLogger:
    """
    構造化ログ出力システム

    JSON形式ファイル出力・ローテーション・スレッドセーフ実装
    """

    def __init__(self, settings=None):
        """StructuredLogger初期化"""
        if settings:
            self.settings = settings
        else:
            from app.core.settings import get_settings

            self.settings = get_settings().log
        self._lock = threading.Lock()
        self._pending_lock = threading.Lock()
        self._pending: List[Future] = []
        self._executor = ThreadPoolExecutor(
            max_workers=2, thread_name_prefix="structured_logger"
        )

        self._ensure_log_directories()

    def _ensure_log_directories(self):
        """ログディレクトリ自動作成"""
        paths = [
            self.settings.system_log_path,
            self.settings.solver_log_path,
            self.settings.error_log_path,
        ]

        for path in paths:
            Path(path).parent.mkdir(parents=True, exist_ok=True)

    def _rotate(self, file_path: Path) -> None:
        """サイズ超過時に .1 .. .N へ順送り"""
        max_size = self.settings.max_file_size_mb * 1024 * 1024
        if not file_path.exists() or file_path.stat().st_size <= max_size:
            return

        backups = self.settings.backup_count
        oldest = Path(f"{file_path}.{backups}")
        if oldest.exists():
            oldest.unlink()
        for index in range(backups - 1, 0, -1):
            src = Path(f"{file_path}.{index}")
            if src.exists():
                src.rename(f"{file_path}.{index + 1}")
        file_path.rename(f"{file_path}.1")

    def _write_to_file(self, log_data: str, file_path: str):
        """
        ファイル書き込み処理（スレッドセーフ）

        Raises:
            OSError: ファイル書き込み失敗時（Fail-Fast）
        """
        try:
            path = Path(file_path)
            path.parent.mkdir(parents=True, exist_ok=True)

            with self._lock:
                self._rotate(path)
                with open(path, "a", encoding="utf-8") as f:
                    f.write(log_data + "\n")
                    f.flush()

        except Exception as e:
            raise OSError(f"StructuredLogger write failed: {file_path}") from e

    def _raise_failures(self) -> None:
        """完了済み書き込みの例外を再送出（Fail-Fast）"""
        with self._pending_lock:
            done = [f for f in self._pending if f.done()]
            self._pending = [f for f in self._pending if not f.done()]
        for future in done:
            error = future.exception()
            if error is not None:
                raise error

    def _submit(self, log: JsonlRecord, file_path: str) -> None:
        self._raise_failures()
        future = self._executor.submit(self._write_to_file, log.to_json(), file_path)
        with self._pending_lock:
            self._pending.append(future)

    def log_system(self, log: SystemLog):
        """システムログ出力"""
        self._submit(log, self.settings.system_log_path)

    def log_solver(self, log: SolverLog):
        """ソルバーログ出力"""
        self._submit(log, self.settings.solver_log_path)

    def log_error(self, log: ErrorLog):
        """エラーログ出力"""
        self._submit(log, self.settings.error_log_path)

    def shutdown(self, wait: bool = True):
        """
        リソース解放

        wait=True なら全書き込みの完了を待ち、失敗があれば OSError を送出
        """
        self._executor.shutdown(wait=wait)
        if wait:
            self._raise_failures()


# シングルトンインスタンス
_logger_instance: Optional[StructuredLogger] = None


def get_logger() -> StructuredLogger:
    """StructuredLoggerインスタンス取得（シングルトン）"""
    global _logger_instance
    if _logger_instance is None:
        _logger_instance = StructuredLogger()
    return _logger_instance


def close_logger() -> None:
    """書き込み完了を待ってシングルトンを破棄（書き込み失敗は OSError で送出）"""
    global _logger_instance
    instance, _logger_instance = _logger_instance, None
    if instance is not None:
        instance.shutdown(wait=True)


def reset_logger() -> None:
    """シングルトン破棄（テスト用、待機なし）"""
    global _logger_instance
    if _logger_instance is not None:
        _logger_instance.shutdown(wait=False)
    _logger_instance = None
