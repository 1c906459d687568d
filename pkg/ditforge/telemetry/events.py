"""Telemetry event records."""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ditforge.errors import DitforgeError

EventKind = Literal["timer", "data", "fault", "signal"]
Stage = Literal["forward", "backward", "optimizer", "dataloader"]
FaultClass = Literal["fatal", "non_fatal"]
SignalName = Literal["traffic_disrupted", "low_gpu_power", "logs_stale"]

SIGNAL_NAMES: tuple[str, ...] = ("traffic_disrupted", "low_gpu_power", "logs_stale")

_KIND_FIELDS: dict[str, set[str]] = {
    "timer": {"stage", "duration_ns"},
    "data": {"sample_meta"},
    "fault": {"fault_class", "transient"},
    "signal": {"signal_name", "active"},
}
_REQUIRED: dict[str, set[str]] = {
    "timer": {"stage", "duration_ns"},
    "data": {"sample_meta"},
    "fault": {"fault_class"},
    "signal": {"signal_name", "active"},
}
_PAYLOAD_FIELDS = set().union(*_KIND_FIELDS.values())


class InsufficientDataError(DitforgeError):
    """Raised when a query lacks the events it needs."""


class SpanError(DitforgeError):
    """Raised when events do not span a positive wall-clock interval."""


class SampleMeta(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    frames: int = Field(ge=1)
    height: int = Field(ge=1)
    width: int = Field(ge=1)
    source_url: str


class EventRecord(BaseModel):
    """
    One telemetry event. Only the fields of its kind are set.

    producer_id and seq are assigned by the recorder when the event is
    spooled and identify it across repeated ingestion.
    """

    model_config = ConfigDict(extra="forbid")

    kind: EventKind
    rank: int = Field(0, ge=0)
    iteration: int = Field(0, ge=0)
    wall_ns: int = Field(ge=0)
    stage: Stage | None = None
    duration_ns: int | None = Field(None, ge=0)
    sample_meta: SampleMeta | None = None
    fault_class: FaultClass | None = None
    transient: bool | None = None
    signal_name: SignalName | None = None
    active: bool | None = None
    producer_id: str | None = None
    seq: int | None = Field(None, ge=0)

    @model_validator(mode="after")
    def _fields_match_kind(self) -> "EventRecord":
        allowed = _KIND_FIELDS[self.kind]
        stray = sorted(f for f in _PAYLOAD_FIELDS - allowed if getattr(self, f) is not None)
        if stray:
            raise ValueError(f"{self.kind} event must not set {stray}")
        missing = sorted(f for f in _REQUIRED[self.kind] if getattr(self, f) is None)
        if missing:
            raise ValueError(f"{self.kind} event requires {missing}")
        return self

    @classmethod
    def timer(cls, stage: Stage, rank: int, iteration: int, duration_ns: int, wall_ns: int) -> "EventRecord":
        return cls(
            kind="timer", stage=stage, rank=rank, iteration=iteration,
            duration_ns=duration_ns, wall_ns=wall_ns,
        )

    @classmethod
    def data(cls, sample: SampleMeta, rank: int, iteration: int, wall_ns: int) -> "EventRecord":
        return cls(kind="data", sample_meta=sample, rank=rank, iteration=iteration, wall_ns=wall_ns)

    @classmethod
    def fault(
        cls, fault_class: FaultClass, rank: int, wall_ns: int, transient: bool = False
    ) -> "EventRecord":
        return cls(kind="fault", fault_class=fault_class, transient=transient, rank=rank, wall_ns=wall_ns)

    @classmethod
    def signal(cls, name: SignalName, active: bool, wall_ns: int, rank: int = 0) -> "EventRecord":
        return cls(kind="signal", signal_name=name, active=active, wall_ns=wall_ns, rank=rank)
