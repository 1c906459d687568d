"""Environment loading helpers for the ditforge runtime."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Iterable

from dotenv import load_dotenv

_LOADED = False


# Alias env names -> canonical Pydantic BaseSettings keys.
_ALIAS_TO_CANONICAL: dict[str, str] = {
    "DITFORGE_LOG_LEVEL": "DITFORGE_LOG",
    "LOGURU_LEVEL": "DITFORGE_LOG",
    "DITFORGE_WORKERS": "DITFORGE_EMULATOR__WORKERS",
    "DITFORGE_QUEUE_DEPTH": "DITFORGE_RPC__QUEUE_DEPTH",
}


def _candidate_env_files() -> list[Path]:
    """Return candidate .env paths in priority order."""
    candidates: list[Path] = [Path.cwd() / ".env"]

    # ditforge/config/env.py -> project root
    repo_env = Path(__file__).resolve().parents[2] / ".env"
    candidates.append(repo_env)
    candidates.append(Path.home() / ".ditforge" / ".env")

    unique: list[Path] = []
    seen: set[Path] = set()
    for item in candidates:
        if item in seen:
            continue
        seen.add(item)
        unique.append(item)
    return unique


def _map_alias_keys(env_items: Iterable[tuple[str, str]]) -> None:
    """Promote alias env names to canonical DITFORGE_ settings when missing."""
    env_map = dict(env_items)

    for alias, canonical in _ALIAS_TO_CANONICAL.items():
        if canonical in env_map:
            continue
        value = env_map.get(alias)
        if value:
            os.environ[canonical] = value
            env_map[canonical] = value


def load_runtime_env(force: bool = False) -> list[Path]:
    """Load .env files and normalize env aliases.

    Returns loaded file paths.
    """
    global _LOADED
    if _LOADED and not force:
        return []

    loaded: list[Path] = []
    for env_path in _candidate_env_files():
        if env_path.is_file():
            load_dotenv(env_path, override=False)
            loaded.append(env_path)

    _map_alias_keys(os.environ.items())
    _LOADED = True
    return loaded
