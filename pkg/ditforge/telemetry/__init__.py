"""Training telemetry: recording, collection and analysis."""

from ditforge.telemetry.analysis import (
    DataDistribution,
    FailureStats,
    StageStats,
    StragglerReport,
    active_signals,
    data_distribution,
    data_throughput,
    detect_stragglers,
    effective_training_time,
    failure_stats,
    iteration_time_ns,
    read_signals,
    restart_decision,
    stage_breakdown,
    wall_span_ns,
)
from ditforge.telemetry.events import (
    SIGNAL_NAMES,
    EventRecord,
    InsufficientDataError,
    SampleMeta,
    SpanError,
)
from ditforge.telemetry.recorder import SPOOL_SUFFIX, TelemetryRecorder
from ditforge.telemetry.store import QuarantinedLine, TelemetryStore, ingest

__all__ = [
    "DataDistribution",
    "EventRecord",
    "FailureStats",
    "InsufficientDataError",
    "QuarantinedLine",
    "SIGNAL_NAMES",
    "SPOOL_SUFFIX",
    "SampleMeta",
    "SpanError",
    "StageStats",
    "StragglerReport",
    "TelemetryRecorder",
    "TelemetryStore",
    "active_signals",
    "data_distribution",
    "data_throughput",
    "detect_stragglers",
    "effective_training_time",
    "failure_stats",
    "ingest",
    "iteration_time_ns",
    "read_signals",
    "restart_decision",
    "stage_breakdown",
    "wall_span_ns",
]
