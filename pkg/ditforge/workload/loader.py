"""Read workload documents from JSON files."""

import json
from pathlib import Path
from typing import TypeVar

from pydantic import BaseModel, ValidationError

from ditforge.workload.types import ClusterSpec, ModelSpec, ParallelismConfig, SpecValidationError

T = TypeVar("T", bound=BaseModel)


def _load(path: Path, model: type[T]) -> T:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise SpecValidationError(f"{path}: cannot read ({e.strerror or e})") from e
    except json.JSONDecodeError as e:
        raise SpecValidationError(f"{path}: invalid JSON ({e})") from e
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise SpecValidationError(f"{path}: {e}") from e


def load_model_spec(path: Path) -> ModelSpec:
    return _load(path, ModelSpec)


def load_cluster_spec(path: Path) -> ClusterSpec:
    return _load(path, ClusterSpec)


def load_parallelism(path: Path) -> ParallelismConfig:
    return _load(path, ParallelismConfig)
