"""Queries over a telemetry store."""

import json
from pathlib import Path
from typing import Iterable, Literal

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field

from ditforge.telemetry.events import (
    SIGNAL_NAMES,
    InsufficientDataError,
    SpanError,
    Stage,
)
from ditforge.telemetry.store import TelemetryStore
from ditforge.workload.types import SpecValidationError

MIN_RANKS = 2
MIN_ITERATIONS = 5

Decision = Literal["restart", "continue"]


class StragglerReport(BaseModel):
    stage: str
    k: float
    global_median_ns: float
    mad_ns: float
    threshold_ns: float
    rank_medians_ns: dict[int, float]
    flagged: list[int] = Field(default_factory=list)


class FailureStats(BaseModel):
    faults: int
    fatal_fraction: float
    non_fatal_fraction: float
    transient_fraction: float


class DataDistribution(BaseModel):
    per_source: dict[str, int] = Field(default_factory=dict)
    duplicates: dict[str, int] = Field(default_factory=dict)
    samples: int = 0


class StageStats(BaseModel):
    count: int
    mean_ns: float
    p50_ns: float
    max_ns: float


def _in_range(table: pd.DataFrame, iterations: tuple[int, int] | None) -> pd.DataFrame:
    if iterations is None:
        return table
    lo, hi = iterations
    return table[(table["iteration"] >= lo) & (table["iteration"] <= hi)]


def detect_stragglers(
    store: TelemetryStore,
    stage: Stage = "backward",
    k: float = 6.0,
    iterations: tuple[int, int] | None = None,
) -> StragglerReport:
    """
    Flag ranks whose median stage time exceeds the global median by more than k MADs.

    Args:
        store: Telemetry with timer events.
        stage: Stage to compare across ranks.
        k: Threshold in median absolute deviations.
        iterations: Inclusive iteration range; all iterations when None.
    """
    timers = _in_range(store.timers, iterations)
    timers = timers[timers["stage"] == stage]
    ranks = timers["rank"].nunique()
    iters = timers["iteration"].nunique()
    if ranks < MIN_RANKS:
        raise InsufficientDataError(f"need >= {MIN_RANKS} ranks of {stage} timers, got {ranks}")
    if iters < MIN_ITERATIONS:
        raise InsufficientDataError(
            f"need >= {MIN_ITERATIONS} iterations of {stage} timers, got {iters}"
        )

    durations = timers["duration_ns"].to_numpy(dtype=float)
    median = float(np.median(durations))
    mad = float(np.median(np.abs(durations - median)))
    threshold = median + k * mad
    per_rank = timers.groupby("rank")["duration_ns"].median().astype(float)
    flagged = sorted(int(rank) for rank, value in per_rank.items() if value > threshold)
    if flagged:
        logger.warning(f"Stragglers in {stage}: ranks {flagged} above {threshold / 1e9:.3f}s")
    return StragglerReport(
        stage=stage,
        k=k,
        global_median_ns=median,
        mad_ns=mad,
        threshold_ns=threshold,
        rank_medians_ns={int(r): float(v) for r, v in per_rank.items()},
        flagged=flagged,
    )


def iteration_time_ns(store: TelemetryStore) -> int:
    """Sum over iterations of the slowest rank's total stage time."""
    timers = store.timers
    if timers.empty:
        raise InsufficientDataError("no timer events")
    per_rank = timers.groupby(["iteration", "rank"])["duration_ns"].sum()
    return int(per_rank.groupby(level="iteration").max().sum())


def wall_span_ns(store: TelemetryStore) -> int:
    """From the earliest timer start or event to the latest event timestamp."""
    starts = [int((store.timers["wall_ns"] - store.timers["duration_ns"]).min())] if len(store.timers) else []
    stamps = [t["wall_ns"] for t in store.tables().values() if len(t)]
    if not stamps:
        raise InsufficientDataError("store has no events")
    first = min(starts + [int(s.min()) for s in stamps])
    last = max(int(s.max()) for s in stamps)
    return last - first


def effective_training_time(store: TelemetryStore, span_ns: int | None = None) -> float:
    """Iteration time over the job's wall-clock span."""
    busy = iteration_time_ns(store)
    span = wall_span_ns(store) if span_ns is None else span_ns
    if span <= 0:
        raise SpanError(f"wall-clock span must be positive, got {span} ns")
    return busy / span


def restart_decision(signals: Iterable[str], quorum: int = 2) -> Decision:
    """Restart only when at least `quorum` distinct signals are active."""
    if quorum < 1:
        raise SpecValidationError(f"quorum must be >= 1, got {quorum}")
    active = set(signals)
    unknown = active - set(SIGNAL_NAMES)
    if unknown:
        logger.warning(f"Ignoring unknown signals {sorted(unknown)}")
    return "restart" if len(active & set(SIGNAL_NAMES)) >= quorum else "continue"


def active_signals(store: TelemetryStore) -> set[str]:
    """Signals whose latest event is active."""
    if store.signals.empty:
        return set()
    latest = store.signals.sort_values("wall_ns", kind="stable").groupby("signal_name").last()
    return {str(name) for name, row in latest.iterrows() if bool(row["active"])}


def failure_stats(store: TelemetryStore) -> FailureStats:
    faults = store.faults
    total = len(faults)
    if total == 0:
        raise InsufficientDataError("no fault events")
    fatal = int((faults["fault_class"] == "fatal").sum())
    transient = int(faults["transient"].astype(bool).sum())
    return FailureStats(
        faults=total,
        fatal_fraction=fatal / total,
        non_fatal_fraction=(total - fatal) / total,
        transient_fraction=transient / total,
    )


def data_distribution(store: TelemetryStore) -> DataDistribution:
    data = store.data
    if data.empty:
        return DataDistribution()
    per_source = data.groupby("source_url").size()
    seen = data.groupby("sample_id").size()
    duplicates = seen[seen > 1]
    return DataDistribution(
        per_source={str(k): int(v) for k, v in per_source.items()},
        duplicates={str(k): int(v) for k, v in duplicates.items()},
        samples=len(data),
    )


def stage_breakdown(store: TelemetryStore) -> dict[str, StageStats]:
    timers = store.timers
    if timers.empty:
        return {}
    grouped = timers.groupby("stage")["duration_ns"]
    return {
        str(stage): StageStats(
            count=int(group.count()),
            mean_ns=float(group.mean()),
            p50_ns=float(group.median()),
            max_ns=float(group.max()),
        )
        for stage, group in grouped
    }


def data_throughput(store: TelemetryStore) -> float:
    """Samples per second over the span of data events."""
    data = store.data
    if data.empty:
        raise InsufficientDataError("no data events")
    span = int(data["wall_ns"].max()) - int(data["wall_ns"].min())
    if span <= 0:
        raise SpanError("data events do not span a positive interval")
    return len(data) / (span / 1e9)


def read_signals(path: Path) -> set[str]:
    """Active signal names from a JSON list, a {name: bool} map or {"signals": [...]}."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise SpecValidationError(f"{path}: cannot read signals ({e})") from e
    if isinstance(data, dict) and "signals" in data:
        data = data["signals"]
    if isinstance(data, dict):
        return {str(name) for name, on in data.items() if on}
    if isinstance(data, list):
        return {str(name) for name in data}
    raise SpecValidationError(f"{path}: expected a list or object of signals")
