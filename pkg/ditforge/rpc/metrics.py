"""Per-pipe counters and latency histograms."""

from prometheus_client import CollectorRegistry, Counter, Histogram
from pydantic import BaseModel, Field

# Queue waits range from microseconds to a send deadline
_LATENCY_BUCKETS = (1e-5, 1e-4, 1e-3, 5e-3, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 30.0)


class HistogramSnapshot(BaseModel):
    count: int = 0
    sum_ns: float = 0.0

    @property
    def mean_ns(self) -> float:
        return self.sum_ns / self.count if self.count else 0.0


class GroupMetrics(BaseModel):
    """Counts of one delivery group (one job) on one pipe."""
    job_id: str
    members: int = 0
    produced: int = 0
    consumed: int = 0
    dropped: int = 0
    in_queue: int = 0

    @property
    def backlog(self) -> int:
        return self.produced - self.consumed - self.dropped


class PipeMetrics(BaseModel):
    name: str
    sent: int = 0  # Frames accepted from producers
    produced: int = 0  # Copies enqueued across groups
    consumed: int = 0
    dropped: int = 0
    queue_latency_ns: HistogramSnapshot = Field(default_factory=HistogramSnapshot)
    transfer_ns: HistogramSnapshot = Field(default_factory=HistogramSnapshot)
    groups: list[GroupMetrics] = Field(default_factory=list)
    window: int | None = None
    stalled_jobs: list[str] = Field(default_factory=list)

    @property
    def stall(self) -> bool:
        return bool(self.stalled_jobs)


class PipeCounters:
    """Prometheus instruments of one registry, labelled by pipe and job."""

    def __init__(self, registry: CollectorRegistry | None = None):
        self.registry = registry or CollectorRegistry()
        self.sent = Counter(
            "ditforge_pipe_sent",
            "Frames accepted from producers",
            ["pipe"],
            registry=self.registry,
        )
        self.produced = Counter(
            "ditforge_pipe_produced",
            "Frame copies enqueued for a delivery group",
            ["pipe", "job"],
            registry=self.registry,
        )
        self.consumed = Counter(
            "ditforge_pipe_consumed",
            "Frames dequeued by consumers",
            ["pipe", "job"],
            registry=self.registry,
        )
        self.dropped = Counter(
            "ditforge_pipe_dropped",
            "Frame copies that never reached a consumer",
            ["pipe", "job"],
            registry=self.registry,
        )
        self.queue_latency = Histogram(
            "ditforge_pipe_queue_latency_seconds",
            "Time a frame spent in a consumer queue",
            ["pipe"],
            buckets=_LATENCY_BUCKETS,
            registry=self.registry,
        )
        self.transfer = Histogram(
            "ditforge_pipe_transfer_seconds",
            "Time from send to enqueue",
            ["pipe"],
            buckets=_LATENCY_BUCKETS,
            registry=self.registry,
        )

    def _value(self, name: str, labels: dict[str, str]) -> float:
        return self.registry.get_sample_value(name, labels) or 0.0

    def group(self, pipe: str, job: str, members: int, in_queue: int) -> GroupMetrics:
        labels = {"pipe": pipe, "job": job}
        return GroupMetrics(
            job_id=job,
            members=members,
            produced=int(self._value("ditforge_pipe_produced_total", labels)),
            consumed=int(self._value("ditforge_pipe_consumed_total", labels)),
            dropped=int(self._value("ditforge_pipe_dropped_total", labels)),
            in_queue=in_queue,
        )

    def histogram(self, name: str, pipe: str) -> HistogramSnapshot:
        labels = {"pipe": pipe}
        return HistogramSnapshot(
            count=int(self._value(f"{name}_count", labels)),
            sum_ns=self._value(f"{name}_sum", labels) * 1e9,
        )

    def sent_count(self, pipe: str) -> int:
        return int(self._value("ditforge_pipe_sent_total", {"pipe": pipe}))
