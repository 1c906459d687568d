"""Non-blocking event recorder with a background spool flusher."""

import json
import os
import queue
import socket
import threading
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator

from loguru import logger

from ditforge.config.schema import TelemetrySettings
from ditforge.telemetry.events import EventRecord, FaultClass, SampleMeta, SignalName, Stage
from ditforge.utils.helpers import ensure_dir, safe_filename

SPOOL_SUFFIX = ".events.jsonl"

# Timer events queue as bare tuples; the flusher expands them
_TimerTuple = tuple[str, int, int, int, int]


def default_producer_id() -> str:
    return f"{socket.gethostname()}-{os.getpid()}"


class TelemetryRecorder:
    """
    Buffer events in memory and append them to a JSONL spool in the background.

    record() only enqueues: when the buffer is full the event is shed and
    counted, so the training loop never waits on disk. Safe to call from many
    threads.
    """

    def __init__(
        self,
        spool_dir: Path,
        producer_id: str | None = None,
        settings: TelemetrySettings | None = None,
    ):
        self.settings = settings or TelemetrySettings()
        self.spool_dir = Path(spool_dir)
        self.producer_id = producer_id or default_producer_id()
        self._buffer: queue.Queue[dict[str, Any] | _TimerTuple] = queue.Queue(
            maxsize=self.settings.buffer_size
        )
        self._count_lock = threading.Lock()
        self._io_lock = threading.Lock()
        self._accepted = 0
        self._shed = 0
        self._seq: int | None = None
        self._written = 0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    @property
    def spool_path(self) -> Path:
        return self.spool_dir / f"{safe_filename(self.producer_id)}{SPOOL_SUFFIX}"

    @property
    def accepted(self) -> int:
        return self._accepted

    @property
    def shed(self) -> int:
        return self._shed

    @property
    def offered(self) -> int:
        with self._count_lock:
            return self._accepted + self._shed

    @property
    def written(self) -> int:
        return self._written

    def _offer(self, item: dict[str, Any] | _TimerTuple) -> bool:
        try:
            self._buffer.put_nowait(item)
        except queue.Full:
            with self._count_lock:
                self._shed += 1
            return False
        with self._count_lock:
            self._accepted += 1
        return True

    def record(self, event: EventRecord) -> bool:
        """Enqueue an event; False means it was shed."""
        return self._offer(event.model_dump(exclude_none=True, exclude={"producer_id", "seq"}))

    def record_timer(
        self, stage: Stage, rank: int, iteration: int, duration_ns: int, wall_ns: int | None = None
    ) -> bool:
        return self._offer((stage, rank, iteration, duration_ns, time.time_ns() if wall_ns is None else wall_ns))

    def record_data(self, sample: SampleMeta, rank: int, iteration: int) -> bool:
        return self.record(EventRecord.data(sample, rank, iteration, time.time_ns()))

    def record_fault(self, fault_class: FaultClass, rank: int, transient: bool = False) -> bool:
        return self.record(EventRecord.fault(fault_class, rank, time.time_ns(), transient))

    def record_signal(self, name: SignalName, active: bool, rank: int = 0) -> bool:
        return self.record(EventRecord.signal(name, active, time.time_ns(), rank))

    @contextmanager
    def timer(self, stage: Stage, rank: int, iteration: int) -> Iterator[None]:
        """Time the enclosed block with perf_counter_ns and record it."""
        start = time.perf_counter_ns()
        try:
            yield
        finally:
            self.record_timer(stage, rank, iteration, time.perf_counter_ns() - start)

    def _next_seq(self) -> int:
        if self._seq is None:
            # Continue numbering after events an earlier run left in the spool
            self._seq = 0
            if self.spool_path.exists():
                with self.spool_path.open("rb") as f:
                    self._seq = sum(1 for _ in f)
        seq = self._seq
        self._seq += 1
        return seq

    def _expand(self, item: dict[str, Any] | _TimerTuple) -> dict[str, Any]:
        if isinstance(item, tuple):
            stage, rank, iteration, duration_ns, wall_ns = item
            record: dict[str, Any] = {
                "kind": "timer",
                "rank": rank,
                "iteration": iteration,
                "wall_ns": wall_ns,
                "stage": stage,
                "duration_ns": duration_ns,
            }
        else:
            record = dict(item)
        record["producer_id"] = self.producer_id
        record["seq"] = self._next_seq()
        return record

    def flush(self) -> int:
        """Write everything buffered so far; returns the number of lines written."""
        written = 0
        with self._io_lock:
            while True:
                batch = []
                try:
                    while len(batch) < self.settings.batch_size:
                        batch.append(self._buffer.get_nowait())
                except queue.Empty:
                    pass
                if not batch:
                    break
                ensure_dir(self.spool_dir)
                lines = [json.dumps(self._expand(item), separators=(",", ":")) for item in batch]
                with self.spool_path.open("a", encoding="utf-8") as f:
                    f.write("\n".join(lines) + "\n")
                written += len(lines)
            self._written += written
        return written

    def _run_loop(self) -> None:
        while not self._stop.wait(self.settings.flush_interval_s):
            try:
                count = self.flush()
                if count:
                    logger.debug(f"Spooled {count} events to {self.spool_path}")
            except Exception as e:
                logger.error(f"Telemetry flush failed: {e}")

    def start(self) -> None:
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._run_loop, name="telemetry-flusher", daemon=True)
        self._thread.start()
        logger.info(f"Telemetry recorder {self.producer_id} spooling to {self.spool_path}")

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
            self._thread = None
        self.flush()
        logger.info(
            f"Telemetry recorder stopped: {self.accepted} accepted, {self.shed} shed, "
            f"{self.written} written"
        )

    def __enter__(self) -> "TelemetryRecorder":
        self.start()
        return self

    def __exit__(self, *exc: object) -> None:
        self.stop()
