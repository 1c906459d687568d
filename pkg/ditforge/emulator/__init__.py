"""Iteration-time and MFU emulator."""

from ditforge.emulator.estimate import (
    InfeasibleConfigError,
    IterationEstimate,
    ModelInconsistencyError,
    OverlapModel,
    estimate_iteration,
    mfu,
)
from ditforge.emulator.pipeline import PipelineResult, closed_form_bubble, simulate_pipeline
from ditforge.emulator.search import (
    InfeasibleEntry,
    PinnedGap,
    RankedEntry,
    SearchReport,
    SearchSpace,
    parse_pin,
    search_configs,
)

__all__ = [
    "InfeasibleConfigError",
    "InfeasibleEntry",
    "IterationEstimate",
    "ModelInconsistencyError",
    "OverlapModel",
    "PinnedGap",
    "PipelineResult",
    "RankedEntry",
    "SearchReport",
    "SearchSpace",
    "closed_form_bubble",
    "estimate_iteration",
    "mfu",
    "parse_pin",
    "search_configs",
    "simulate_pipeline",
]
