"""
requirements.txtのテスト

requirements.txtファイルの存在と必要なライブラリの記載を確認する
"""

import os
import re
from pathlib import Path

import pytest


def _library_names(requirements_path: Path) -> list[str]:
    """コメント・空行を除いたライブラリ名（バージョン指定を除く）"""
    names = []
    for raw in requirements_path.read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        names.append(re.split(r"[=<>~!]", line, maxsplit=1)[0].strip().lower())
    return names


class TestRequirements:
    """requirements.txt関連のテストクラス"""

    @pytest.fixture
    def project_root(self):
        """プロジェクトルートディレクトリのパス"""
        return Path(__file__).parent.parent

    @pytest.fixture
    def requirements_path(self, project_root):
        """requirements.txtファイルのパス"""
        return project_root / "requirements.txt"

    def test_requirements_file_is_readable(self, requirements_path):
        """requirements.txtファイルが読み取り可能であることを確認"""
        assert requirements_path.is_file(), "requirements.txt must be a file"
        assert os.access(requirements_path, os.R_OK), "requirements.txt must be readable"

    def test_required_libraries_present(self, requirements_path):
        """必要なライブラリがすべて記載されていることを確認"""
        required = ["numpy", "scipy", "pandas", "pydantic", "pydantic-settings",
                    "python-dotenv", "pytest"]
        names = _library_names(requirements_path)
        missing = [lib for lib in required if lib not in names]
        assert not missing, f"Missing required libraries: {missing}"

    def test_unused_libraries_absent(self, requirements_path):
        """使われなくなったライブラリが残っていないことを確認"""
        names = _library_names(requirements_path)
        leftovers = [lib for lib in ["discord.py", "langgraph", "langgraph-supervisor",
                                     "langchain-core", "redis", "psycopg2-binary", "pgvector"]
                     if lib in names]
        assert not leftovers, f"Unused libraries listed: {leftovers}"

    def test_no_duplicate_libraries(self, requirements_path):
        """重複するライブラリがないことを確認"""
        names = _library_names(requirements_path)
        duplicates = sorted({name for name in names if names.count(name) > 1})
        assert not duplicates, f"Duplicate libraries found: {duplicates}"

    def test_pydantic_pinned(self, requirements_path):
        """pydanticのバージョンが固定されていることを確認"""
        assert "pydantic==2.8.2" in requirements_path.read_text(encoding="utf-8")

    def test_manifest_dependencies_listed(self, project_root, requirements_path):
        """pyproject.tomlの依存がrequirements.txtにも記載されていることを確認"""
        manifest = (project_root / "pyproject.toml").read_text(encoding="utf-8")
        block = manifest.split("dependencies = [", 1)[1].split("]", 1)[0]
        declared = [re.split(r"[=<>~!]", item.strip().strip('",'), maxsplit=1)[0].lower()
                    for item in block.splitlines() if item.strip()]
        names = _library_names(requirements_path)
        missing = [lib for lib in declared if lib not in names]
        assert not missing, f"Declared in pyproject but not in requirements: {missing}"
