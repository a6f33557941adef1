"""
cloudfill 統一エラーハンドラー

統一エラーハンドラー・Fail-Fast原則・StructuredLogger統合

- Fail-Fast: エラーログ記録後 sys.exit(終了コード) 必須・フォールバック禁止
- 終了コード: 0 成功 / 2 設定・入力エラー / 3 ソルバー実行時エラー / 1 想定外
"""

import sys
from typing import Any, Dict, Optional

from pydantic import ValidationError

from app.core.exceptions import ContainerIOError, CloudFillError, SolverError
from app.core.logger import ErrorLog, close_logger, get_logger

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_SOLVER = 3


def _validate_context(context: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """コンテキストの最小検証"""
    if not context:
        return {}

    if not isinstance(context, dict):
        return {"invalid_context": str(context)}

    if len(context) > 10:
        return dict(list(context.items())[:10])

    return context


def exit_code_for(exc: BaseException) -> int:
    """
    例外種別から終了コードを決定

    ソルバー実行時エラーのみ3、設定・入力起因は2
    """
    # RankTooLargeError は SolverError だが設定起因なので先に判定
    if isinstance(exc, (ValidationError, ValueError, ContainerIOError)):
        return EXIT_USAGE
    if isinstance(exc, SolverError):
        return EXIT_SOLVER
    if isinstance(exc, CloudFillError):
        return EXIT_USAGE
    return EXIT_UNEXPECTED


def handle_system_error(
    exc: Exception,
    context: Optional[Dict[str, Any]] = None,
    exit_code: int = EXIT_UNEXPECTED
) -> None:
    """
    統一システムエラーハンドラー

    ErrorLog.from_exception()活用・StructuredLogger統合

    Fail-Fast原則:
        - エラーログ記録後、必ずsys.exit()実行
        - フォールバック処理禁止
    """
    try:
        logger = get_logger()
        error_log = ErrorLog.from_exception(exc, context=_validate_context(context))
        logger.log_error(error_log)
        close_logger()

    except Exception as log_error:
        try:
            sys.stderr.write(f"FATAL: Error logging failed: {log_error}\n")
            sys.stderr.flush()
        except (OSError, ValueError):
            # 標準エラーが閉じている場合は終了コードのみ
            pass

    sys.exit(exit_code)


def handle_command_error(exc: Exception, command: str) -> None:
    """
    CLIコマンド用エラーハンドラー

    標準エラーに1行メッセージを出力し、例外種別に応じた終了コードで停止
    """
    exit_code = exit_code_for(exc)
    sys.stderr.write(f"error: {command}: {type(exc).__name__}: {exc}\n")
    sys.stderr.flush()

    context = {
        "module": "cli",
        "command": command,
        "exit_code": exit_code,
    }
    handle_system_error(exc, context, exit_code=exit_code)
