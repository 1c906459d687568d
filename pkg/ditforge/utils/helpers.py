"""Utility functions for ditforge."""

import json
import re
from pathlib import Path
from typing import Any

from pydantic import BaseModel

from ditforge.errors import DitforgeError

_SIZE_UNITS = {
    "": 1,
    "b": 1,
    "kb": 1000,
    "mb": 1000**2,
    "gb": 1000**3,
    "kib": 1024,
    "mib": 1024**2,
    "gib": 1024**3,
}
_SIZE_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*([a-zA-Z]*)\s*$")
_RATE_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*/\s*(s|sec|m|min)\s*$")
_BUCKET_RE = re.compile(r"^\s*(\d+)x(\d+)x(\d+)\s*$")


class ArgumentError(DitforgeError):
    """Raised when a size, rate or bucket string cannot be parsed."""


def ensure_dir(path: Path) -> Path:
    """Ensure a directory exists, creating it if necessary."""
    path.mkdir(parents=True, exist_ok=True)
    return path


def parse_size(text: str) -> int:
    """
    Parse a byte size such as "4MiB", "64MB" or "512".

    Args:
        text: Size with an optional decimal or binary unit suffix.

    Returns:
        Size in bytes.
    """
    match = _SIZE_RE.match(text)
    unit = match.group(2).lower() if match else None
    if match is None or unit not in _SIZE_UNITS:
        raise ArgumentError(f"cannot parse size {text!r}")
    return int(float(match.group(1)) * _SIZE_UNITS[unit])


def parse_rate(text: str) -> float:
    """Parse "100/s" or "600/min" into events per second."""
    match = _RATE_RE.match(text)
    if match is None:
        raise ArgumentError(f"cannot parse rate {text!r}")
    value = float(match.group(1))
    return value / 60.0 if match.group(2) in {"m", "min"} else value


def parse_bucket(text: str) -> tuple[int, int, int]:
    """Parse "204x544x992" into (frames, height, width)."""
    match = _BUCKET_RE.match(text)
    if match is None:
        raise ArgumentError(f"cannot parse bucket {text!r}; expected FRAMESxHEIGHTxWIDTH")
    return int(match.group(1)), int(match.group(2)), int(match.group(3))


def safe_filename(name: str) -> str:
    """Convert a string to a safe filename."""
    unsafe = '<>:"/\\|?*'
    for char in unsafe:
        name = name.replace(char, "_")
    return name.strip()


def to_json(data: Any) -> str:
    """Serialize a model or plain structure with stable indentation."""
    if isinstance(data, BaseModel):
        return data.model_dump_json(indent=2)
    return json.dumps(data, indent=2, sort_keys=True, default=str)


def write_output(data: Any, out: Path | None) -> str:
    """Write JSON to a file when given and return the text."""
    text = to_json(data)
    if out is not None:
        ensure_dir(out.parent)
        out.write_text(text + "\n", encoding="utf-8")
    return text
