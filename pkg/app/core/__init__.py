"""
Core module for cloudfill

設定管理、構造化ログ、例外階層、統一エラーハンドラー、評価レポートの核となる機能を提供
"""
