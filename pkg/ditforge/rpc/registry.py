"""Named pipes: producers and consumers matched by name, grouped by job."""

import asyncio
import itertools
import time
from contextlib import suppress
from dataclasses import dataclass
from typing import Literal

from loguru import logger
from prometheus_client import CollectorRegistry
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ditforge.config.schema import RpcSettings
from ditforge.errors import DitforgeError
from ditforge.rpc.frame import MAX_NAME_BYTES, Frame
from ditforge.rpc.metrics import PipeCounters, PipeMetrics

Role = Literal["producer", "consumer"]
Mode = Literal["broadcast", "spray"]


class PipeConflictError(DitforgeError):
    """Raised when a declaration clashes with the pipe's existing topology."""


class PipeClosedError(DitforgeError):
    """Raised when sending on a closed producer handle."""


class SequenceError(DitforgeError):
    """Raised when a producer's sequence numbers stop increasing."""


class BackpressureTimeoutError(DitforgeError):
    """Raised when some jobs could not take a frame before the send deadline."""

    def __init__(self, message: str, jobs: list[str]):
        super().__init__(message)
        self.jobs = jobs


class PipeDecl(BaseModel):
    """One endpoint of a named pipe."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    role: Role
    job_id: str | None = None
    mode: Mode = "broadcast"
    endpoint: str | None = None  # Stable identity; generated when omitted

    @field_validator("name")
    @classmethod
    def _check_name(cls, value: str) -> str:
        size = len(value.encode("utf-8"))
        if not 0 < size <= MAX_NAME_BYTES:
            raise ValueError(f"name must be 1..{MAX_NAME_BYTES} UTF-8 bytes, got {size}")
        if value.startswith("$"):
            raise ValueError("names starting with '$' are reserved for control frames")
        return value

    @model_validator(mode="after")
    def _check_role(self) -> "PipeDecl":
        if self.role == "producer" and self.job_id is not None:
            raise ValueError("producers serve every job and carry no job_id")
        if self.role == "consumer" and not self.job_id:
            raise ValueError("consumers must name their job_id")
        return self


class SendAck(BaseModel):
    seq_no: int
    delivered: list[str] = Field(default_factory=list)  # Jobs that took a copy
    dropped: list[str] = Field(default_factory=list)


@dataclass(eq=False)
class _Item:
    frame: Frame
    enqueued_ns: int = 0


class _Group:
    """Consumers of one job on one pipe."""

    def __init__(self, job_id: str):
        self.job_id = job_id
        self.members: list[ConsumerHandle] = []
        self.cursor = 0

    def pick(self, policy: str) -> "ConsumerHandle":
        if policy == "least_outstanding":
            return min(self.members, key=lambda m: m.outstanding)
        member = self.members[self.cursor % len(self.members)]
        self.cursor += 1
        return member

    def in_queue(self) -> int:
        return sum(m.outstanding for m in self.members)


class _Pipe:
    def __init__(self, name: str, mode: Mode):
        self.name = name
        self.mode = mode
        self.producers: dict[str, ProducerHandle] = {}
        self.consumers: dict[str, ConsumerHandle] = {}
        self.groups: dict[str, _Group] = {}
        self.group_cursor = 0  # Spray pipes rotate frames over their groups
        self.had_producer = False

    @property
    def ended(self) -> bool:
        return self.had_producer and not self.producers

    def active_groups(self) -> list[_Group]:
        return [g for g in self.groups.values() if g.members]

    def receiving_groups(self) -> list[_Group]:
        """Groups that take the next frame: all of them, or one in turn for spray."""
        groups = self.active_groups()
        if self.mode == "broadcast" or len(groups) <= 1:
            return groups
        group = groups[self.group_cursor % len(groups)]
        self.group_cursor += 1
        return [group]


class ProducerHandle:
    def __init__(self, registry: "PipeRegistry", pipe: _Pipe, endpoint: str):
        self.registry = registry
        self.pipe = pipe
        self.endpoint = endpoint
        self.closed = False
        self._last_seq: int | None = None

    @property
    def name(self) -> str:
        return self.pipe.name

    async def send(self, frame: Frame) -> SendAck:
        """
        Enqueue one copy per job (broadcast) or for one job in turn (spray);
        within a job the copy goes to one consumer.

        Jobs are served concurrently, so a full queue in one job only delays
        that job. Jobs still blocked at the deadline are named in
        BackpressureTimeoutError after every other job has its copy.
        """
        if self.closed:
            raise PipeClosedError(f"producer {self.endpoint} on {self.name!r} is closed")
        if frame.name != self.name:
            raise PipeConflictError(f"frame for {frame.name!r} sent on pipe {self.name!r}")
        if self._last_seq is not None and frame.seq_no <= self._last_seq:
            raise SequenceError(
                f"seq_no {frame.seq_no} not above {self._last_seq} on pipe {self.name!r}"
            )
        self._last_seq = frame.seq_no
        return await self.registry._send(self.pipe, frame.stamped(time.monotonic_ns()))

    async def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        self.pipe.producers.pop(self.endpoint, None)
        if self.pipe.ended:
            for consumer in self.pipe.consumers.values():
                consumer._eos.set()
        logger.info(f"Producer {self.endpoint} closed pipe {self.name!r}")


class ConsumerHandle:
    def __init__(self, registry: "PipeRegistry", pipe: _Pipe, group: _Group, endpoint: str):
        self.registry = registry
        self.pipe = pipe
        self.group = group
        self.endpoint = endpoint
        self.closed = False
        self._queue: asyncio.Queue[_Item] = asyncio.Queue(maxsize=registry.settings.queue_depth)
        self._eos = asyncio.Event()

    @property
    def name(self) -> str:
        return self.pipe.name

    @property
    def job_id(self) -> str:
        return self.group.job_id

    @property
    def outstanding(self) -> int:
        return self._queue.qsize()

    def _drain(self) -> list[_Item]:
        items = []
        while not self._queue.empty():
            items.append(self._queue.get_nowait())
        return items

    async def recv(self) -> Frame | None:
        """Next frame of this consumer's share; None once the producers are done and the queue is empty."""
        while True:
            if self.closed:
                return None
            if not self._queue.empty():
                item = self._queue.get_nowait()
                break
            if self._eos.is_set():
                return None
            getter = asyncio.ensure_future(self._queue.get())
            ended = asyncio.ensure_future(self._eos.wait())
            try:
                done, _ = await asyncio.wait({getter, ended}, return_when=asyncio.FIRST_COMPLETED)
            except asyncio.CancelledError:
                if getter.done() and not getter.cancelled():
                    # Already dequeued; hand it back so close() can re-spray it
                    with suppress(asyncio.QueueFull):
                        self._queue.put_nowait(getter.result())
                raise
            finally:
                for task in (getter, ended):
                    if not task.done():
                        task.cancel()
            if getter in done:
                item = getter.result()
                break
        self.registry._record_dequeue(self, item)
        return item.frame

    def __aiter__(self) -> "ConsumerHandle":
        return self

    async def __anext__(self) -> Frame:
        frame = await self.recv()
        if frame is None:
            raise StopAsyncIteration
        return frame

    def metrics(self, window: int | None = None) -> PipeMetrics:
        return self.registry.metrics(self.name, window)

    async def close(self) -> None:
        """Leave the group; queued frames go to the remaining members."""
        if self.closed:
            return
        self.closed = True
        self.group.members.remove(self)
        self.group.cursor = 0
        self.pipe.group_cursor = 0
        self.pipe.consumers.pop(self.endpoint, None)
        orphans = self._drain()
        self._eos.set()
        log = logger.info if self.pipe.ended and not orphans else logger.warning
        log(
            f"Consumer {self.endpoint} left {self.name!r}/{self.job_id}; "
            f"re-spraying {len(orphans)} frames to {len(self.group.members)} members"
        )
        await self.registry._respray(self.pipe, self.group, orphans)


class PipeRegistry:
    """
    Process-local matchmaker for named pipes.

    Handles are confined to the event loop that uses them; other threads reach
    them through asyncio.run_coroutine_threadsafe.
    """

    def __init__(
        self,
        settings: RpcSettings | None = None,
        collector: CollectorRegistry | None = None,
    ):
        self.settings = settings or RpcSettings()
        self.counters = PipeCounters(collector)
        self._pipes: dict[str, _Pipe] = {}
        self._ids = itertools.count()

    @property
    def pipes(self) -> list[str]:
        return sorted(self._pipes)

    def declare(self, decl: PipeDecl) -> ProducerHandle | ConsumerHandle:
        pipe = self._pipes.get(decl.name)
        if pipe is None:
            pipe = self._pipes[decl.name] = _Pipe(decl.name, decl.mode)
        elif pipe.mode != decl.mode:
            raise PipeConflictError(
                f"pipe {decl.name!r} is {pipe.mode}, cannot declare it as {decl.mode}"
            )
        endpoint = decl.endpoint or f"{decl.role}-{next(self._ids)}"
        if endpoint in pipe.producers or endpoint in pipe.consumers:
            raise PipeConflictError(f"endpoint {endpoint!r} already declared on pipe {decl.name!r}")

        if decl.role == "producer":
            producer = ProducerHandle(self, pipe, endpoint)
            pipe.producers[endpoint] = producer
            pipe.had_producer = True
            for consumer in pipe.consumers.values():
                consumer._eos.clear()
            logger.info(f"Producer {endpoint} joined {decl.name!r}")
            return producer

        job = decl.job_id or ""
        group = pipe.groups.setdefault(job, _Group(job))
        consumer = ConsumerHandle(self, pipe, group, endpoint)
        group.members.append(consumer)
        group.cursor = 0
        pipe.group_cursor = 0
        pipe.consumers[endpoint] = consumer
        if pipe.ended:
            consumer._eos.set()
        logger.info(f"Consumer {endpoint} joined {decl.name!r}/{job} ({len(group.members)} members)")
        return consumer

    async def _send(self, pipe: _Pipe, frame: Frame) -> SendAck:
        self.counters.sent.labels(pipe=pipe.name).inc()
        groups = pipe.receiving_groups()
        results = await asyncio.gather(
            *(self._deliver(pipe, group, frame) for group in groups), return_exceptions=True
        )
        ack = SendAck(seq_no=frame.seq_no)
        stalled = []
        for group, result in zip(groups, results):
            if isinstance(result, TimeoutError):
                stalled.append(group.job_id)
                ack.dropped.append(group.job_id)
            elif isinstance(result, BaseException):
                raise result
            elif result:
                ack.delivered.append(group.job_id)
            else:
                ack.dropped.append(group.job_id)
        if stalled:
            raise BackpressureTimeoutError(
                f"send deadline of {self.settings.send_deadline_s}s exceeded on {pipe.name!r} "
                f"for jobs {stalled} (seq {frame.seq_no})",
                stalled,
            )
        return ack

    async def _deliver(self, pipe: _Pipe, group: _Group, frame: Frame) -> bool:
        labels = {"pipe": pipe.name, "job": group.job_id}
        self.counters.produced.labels(**labels).inc()
        deadline = asyncio.get_running_loop().time() + self.settings.send_deadline_s
        try:
            placed = await self._place(pipe, group, _Item(frame), deadline)
        except TimeoutError:
            self.counters.dropped.labels(**labels).inc()
            raise
        if not placed:
            self.counters.dropped.labels(**labels).inc()
        return placed

    async def _place(self, pipe: _Pipe, group: _Group, item: _Item, deadline: float) -> bool:
        """Put one item in a member queue of the group; False if it cannot be placed."""
        loop = asyncio.get_running_loop()
        while group.members:
            member = group.pick(self.settings.spray)
            if self.settings.policy == "drop":
                try:
                    member._queue.put_nowait(item)
                except asyncio.QueueFull:
                    return False
            else:
                async with asyncio.timeout(max(0.0, deadline - loop.time())):
                    await member._queue.put(item)
            item.enqueued_ns = time.monotonic_ns()
            self.counters.transfer.labels(pipe=pipe.name).observe(
                max(0, item.enqueued_ns - item.frame.sent_at) / 1e9
            )
            if not member.closed:
                return True
            # The member left while this put was blocked; move its queue on
            orphans = member._drain()
            if item in orphans:
                orphans.remove(item)
                await self._respray(pipe, group, orphans)
                continue
            await self._respray(pipe, group, orphans)
            return True
        return False

    async def _respray(self, pipe: _Pipe, group: _Group, items: list[_Item]) -> None:
        labels = {"pipe": pipe.name, "job": group.job_id}
        deadline = asyncio.get_running_loop().time() + self.settings.send_deadline_s
        for item in items:
            try:
                placed = await self._place(pipe, group, item, deadline)
            except TimeoutError:
                placed = False
            if not placed:
                self.counters.dropped.labels(**labels).inc()

    def _record_dequeue(self, consumer: ConsumerHandle, item: _Item) -> None:
        self.counters.consumed.labels(pipe=consumer.name, job=consumer.job_id).inc()
        self.counters.queue_latency.labels(pipe=consumer.name).observe(
            max(0, time.monotonic_ns() - item.enqueued_ns) / 1e9
        )

    def metrics(self, name: str, window: int | None = None) -> PipeMetrics:
        """Snapshot of a pipe's counters; unknown pipes read as idle."""
        window = self.settings.stall_window if window is None else window
        pipe = self._pipes.get(name)
        if pipe is None:
            return PipeMetrics(name=name, window=window)
        groups = [
            self.counters.group(name, g.job_id, len(g.members), g.in_queue())
            for g in pipe.groups.values()
        ]
        stalled = [g.job_id for g in groups if g.produced - g.consumed > window]
        if stalled:
            logger.warning(f"Stall alarm on {name!r}: jobs {stalled} lag beyond {window} frames")
        return PipeMetrics(
            name=name,
            sent=self.counters.sent_count(name),
            produced=sum(g.produced for g in groups),
            consumed=sum(g.consumed for g in groups),
            dropped=sum(g.dropped for g in groups),
            queue_latency_ns=self.counters.histogram("ditforge_pipe_queue_latency_seconds", name),
            transfer_ns=self.counters.histogram("ditforge_pipe_transfer_seconds", name),
            groups=groups,
            window=window,
            stalled_jobs=stalled,
        )

    async def close(self) -> None:
        for pipe in list(self._pipes.values()):
            for producer in list(pipe.producers.values()):
                await producer.close()
