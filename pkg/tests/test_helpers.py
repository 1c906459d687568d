from __future__ import annotations

import json
from pathlib import Path

import pytest

from ditforge.utils.helpers import (
    ArgumentError,
    parse_bucket,
    parse_rate,
    parse_size,
    safe_filename,
    write_output,
)


@pytest.mark.parametrize(
    ("text", "expected"),
    [("512", 512), ("4MiB", 4 * 1024 * 1024), ("64MB", 64_000_000), ("1.5 KiB", 1536), ("2gib", 2 << 30)],
)
def test_parse_size(text: str, expected: int) -> None:
    assert parse_size(text) == expected


@pytest.mark.parametrize("text", ["", "MiB", "4 parsecs", "-1"])
def test_parse_size_rejects_garbage(text: str) -> None:
    with pytest.raises(ArgumentError, match="cannot parse size"):
        parse_size(text)


def test_parse_rate() -> None:
    assert parse_rate("100/s") == 100.0
    assert parse_rate("600/min") == pytest.approx(10.0)
    with pytest.raises(ArgumentError):
        parse_rate("fast")


def test_parse_bucket() -> None:
    assert parse_bucket("204x544x992") == (204, 544, 992)
    with pytest.raises(ArgumentError, match="FRAMESxHEIGHTxWIDTH"):
        parse_bucket("204x544")


def test_safe_filename() -> None:
    assert safe_filename("node:0/rank 3") == "node_0_rank 3"


def test_write_output(tmp_path: Path) -> None:
    out = tmp_path / "nested" / "result.json"

    text = write_output({"b": 1, "a": [1, 2]}, out)

    assert json.loads(out.read_text(encoding="utf-8")) == {"a": [1, 2], "b": 1}
    assert text.startswith('{\n  "a"')
    assert write_output({"x": 1}, None) == '{\n  "x": 1\n}'
