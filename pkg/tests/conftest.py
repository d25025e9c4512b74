from __future__ import annotations

from pathlib import Path

import pytest

from confloc.parsing import ParserConfig, RawLine, parse_log_file

DATA_DIR = Path(__file__).parent / "data"


def parse_text(text: str, file_id: str = "test.log", config: ParserConfig | None = None):
    """Parse an inline corpus; blank trailing lines are dropped."""
    config = config or ParserConfig()
    lines = [
        RawLine(file_id=file_id, line_no=i, text=line)
        for i, line in enumerate(text.splitlines(), start=1)
    ]
    return parse_log_file(lines, config)


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def parser_config() -> ParserConfig:
    return ParserConfig()
