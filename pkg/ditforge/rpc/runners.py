"""Producer, consumer and in-process demo drivers behind the pipe commands."""

import asyncio
import random
import time

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field

from ditforge.config.schema import RpcSettings
from ditforge.rpc.frame import DType, Frame
from ditforge.rpc.metrics import PipeMetrics
from ditforge.rpc.peers import PeersFile
from ditforge.rpc.registry import (
    BackpressureTimeoutError,
    ConsumerHandle,
    PipeDecl,
    PipeRegistry,
    ProducerHandle,
)
from ditforge.rpc.transport import PipeClient, PipeServer
from ditforge.workload.types import SpecValidationError


class StreamStats(BaseModel):
    """What one consumer endpoint received."""
    endpoint: str
    job_id: str
    frames: int = 0
    bytes: int = 0
    seq_nos: list[int] = Field(default_factory=list)


class ProducerReport(BaseModel):
    pipe: str
    sent: int
    bytes: int
    elapsed_s: float
    timeouts: int = 0
    metrics: PipeMetrics


class DemoReport(BaseModel):
    pipe: str
    mode: str
    frames: int
    seed: int
    left: str | None = None  # Consumer that left mid-stream
    consumers: list[StreamStats]
    metrics: PipeMetrics

    def delivered(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for stats in self.consumers:
            out.setdefault(stats.job_id, {})[stats.endpoint] = stats.frames
        return out


def payload_frame(name: str, seq_no: int, size: int, rng: np.random.Generator) -> Frame:
    data = rng.integers(0, 256, size=size, dtype=np.uint8).tobytes()
    return Frame(seq_no=seq_no, name=name, dtype=DType.uint8, shape=(size,), payload=data)


async def _drain_consumer(handle: ConsumerHandle, stats: StreamStats, leave_after: int | None) -> None:
    async for frame in handle:
        stats.frames += 1
        stats.bytes += len(frame.payload)
        stats.seq_nos.append(frame.seq_no)
        if leave_after is not None and stats.frames >= leave_after:
            await handle.close()
            return


async def _pace(start: float, index: int, rate: float | None) -> None:
    if rate:
        delay = start + index / rate - time.perf_counter()
        if delay > 0:
            await asyncio.sleep(delay)


async def _produce(
    producer: ProducerHandle,
    count: int,
    size: int,
    rate: float | None,
    rng: np.random.Generator,
) -> tuple[int, int]:
    start = time.perf_counter()
    timeouts = 0
    for seq in range(count):
        await _pace(start, seq, rate)
        try:
            await producer.send(payload_frame(producer.name, seq, size, rng))
        except BackpressureTimeoutError as e:
            timeouts += 1
            logger.warning(str(e))
    await producer.close()
    return count, timeouts


async def run_demo(
    frames: int = 100,
    jobs: int = 2,
    consumers_per_job: int = 3,
    mode: str = "broadcast",
    size: int = 1024,
    seed: int = 0,
    leave_after: int | None = None,
    settings: RpcSettings | None = None,
) -> DemoReport:
    """
    In-process rehearsal of one pipe.

    With leave_after set, one consumer picked by the seeded RNG leaves after
    that many frames and its queue is re-sprayed to its job.
    """
    if frames < 0 or jobs < 1 or consumers_per_job < 1:
        raise SpecValidationError("frames >= 0, jobs >= 1 and consumers_per_job >= 1 required")
    picker = random.Random(seed)
    rng = np.random.default_rng(seed)
    registry = PipeRegistry(settings)
    name = "latents"

    consumers: list[tuple[ConsumerHandle, StreamStats]] = []
    for j in range(jobs):
        for c in range(consumers_per_job):
            decl = PipeDecl(name=name, role="consumer", job_id=f"job{j}", mode=mode, endpoint=f"job{j}-c{c}")
            handle = registry.declare(decl)
            consumers.append((handle, StreamStats(endpoint=decl.endpoint, job_id=decl.job_id)))
    producer = registry.declare(PipeDecl(name=name, role="producer", mode=mode, endpoint="producer"))

    leaver = picker.choice(consumers)[0].endpoint if leave_after is not None else None
    tasks = [
        asyncio.create_task(
            _drain_consumer(handle, stats, leave_after if handle.endpoint == leaver else None)
        )
        for handle, stats in consumers
    ]
    await _produce(producer, frames, size, None, rng)
    await asyncio.gather(*tasks)
    return DemoReport(
        pipe=name,
        mode=mode,
        frames=frames,
        seed=seed,
        left=leaver,
        consumers=[stats for _, stats in consumers],
        metrics=registry.metrics(name),
    )


async def run_producer(
    peers: PeersFile,
    pipe: str,
    count: int,
    size: int,
    rate: float | None = None,
    seed: int = 0,
    settings: RpcSettings | None = None,
) -> ProducerReport:
    """Serve a pipe from the first producer address and wait for every listed consumer."""
    spec = peers.pipe(pipe)
    registry = PipeRegistry(settings)
    server = PipeServer.from_addr(registry, spec.producers[0])
    producer = registry.declare(PipeDecl(name=pipe, role="producer", mode=spec.mode))
    await server.start()
    try:
        await server.wait_for_consumers(pipe, len(spec.consumers))
        start = time.perf_counter()
        sent, timeouts = await _produce(producer, count, size, rate, np.random.default_rng(seed))
        elapsed = time.perf_counter() - start
        # The producer is closed, so each driver ends after writing its end-of-stream
        await server.drain()
    finally:
        await server.stop()
    return ProducerReport(
        pipe=pipe,
        sent=sent,
        bytes=sent * size,
        elapsed_s=elapsed,
        timeouts=timeouts,
        metrics=registry.metrics(pipe),
    )


async def run_consumer(
    peers: PeersFile,
    pipe: str,
    job_id: str,
    endpoint: str | None = None,
    settings: RpcSettings | None = None,
) -> list[StreamStats]:
    """Connect to every producer of the pipe and read until each stream ends."""
    spec = peers.pipe(pipe)
    decl = PipeDecl(name=pipe, role="consumer", job_id=job_id, mode=spec.mode, endpoint=endpoint)

    async def one(addr: str) -> StreamStats:
        stats = StreamStats(endpoint=f"{endpoint or job_id}@{addr}", job_id=job_id)
        async with PipeClient(addr, decl, settings) as client:
            async for frame in client:
                stats.frames += 1
                stats.bytes += len(frame.payload)
                stats.seq_nos.append(frame.seq_no)
        return stats

    return list(await asyncio.gather(*(one(addr) for addr in spec.producers)))
