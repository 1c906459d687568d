"""Chunked staging-copy and send overlap for large payloads."""

import asyncio
import time
from typing import Sequence

from pydantic import BaseModel, ConfigDict, Field

from ditforge.workload.types import SpecValidationError


class LinkModel(BaseModel):
    """Bandwidths of the staging copy and of the wire, in GB/s."""

    model_config = ConfigDict(frozen=True)

    copy_gbps: float = Field(25.0, gt=0)
    send_gbps: float = Field(12.5, gt=0)
    per_chunk_latency_s: float = Field(0.0, ge=0)


class TransferReport(BaseModel):
    chunks: int
    chunk_size: int | None = None
    payload_bytes: int | None = None
    pipelined_s: float
    store_and_forward_s: float
    measured: bool = False

    @property
    def speedup(self) -> float:
        return self.store_and_forward_s / self.pipelined_s if self.pipelined_s else 1.0


def model_transfer(copy_s: Sequence[float], send_s: Sequence[float]) -> TransferReport:
    """
    Makespan when chunk k+1 is staged while chunk k is on the wire.

    A chunk is sent once it is staged and the previous send has finished;
    store-and-forward stages everything before sending anything.
    """
    if len(copy_s) != len(send_s) or not copy_s:
        raise SpecValidationError("need matching, non-empty copy and send times")
    copy_end = 0.0
    send_end = 0.0
    for copy, send in zip(copy_s, send_s):
        copy_end += copy
        send_end = max(copy_end, send_end) + send
    return TransferReport(
        chunks=len(copy_s),
        pipelined_s=send_end,
        store_and_forward_s=sum(copy_s) + sum(send_s),
    )


def chunk_sizes(payload_bytes: int, chunk_size: int) -> list[int]:
    if chunk_size <= 0:
        raise SpecValidationError(f"chunk_size must be positive, got {chunk_size}")
    if payload_bytes <= 0:
        return [0]
    full, rest = divmod(payload_bytes, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def pipelined_transfer(
    payload: bytes | int,
    chunk_size: int,
    link: LinkModel | None = None,
) -> TransferReport:
    """Model transfer of a payload (or payload size) split into chunks over a link."""
    link = link or LinkModel()
    size = payload if isinstance(payload, int) else len(payload)
    sizes = chunk_sizes(size, chunk_size)
    copy_s = [n / (link.copy_gbps * 1e9) for n in sizes]
    send_s = [n / (link.send_gbps * 1e9) + link.per_chunk_latency_s for n in sizes]
    report = model_transfer(copy_s, send_s)
    return report.model_copy(update={"chunk_size": chunk_size, "payload_bytes": size})


async def _sink(reader: asyncio.StreamReader, writer: asyncio.StreamWriter, total: int, done: asyncio.Future) -> None:
    received = 0
    while received < total:
        data = await reader.read(1 << 20)
        if not data:
            break
        received += len(data)
    writer.close()
    if not done.done():
        done.set_result(received)


async def _send_over_loopback(payload: memoryview, chunk: int, pipelined: bool) -> float:
    loop = asyncio.get_running_loop()
    done: asyncio.Future = loop.create_future()
    server = await asyncio.start_server(
        lambda r, w: _sink(r, w, len(payload), done), "127.0.0.1", 0
    )
    port = server.sockets[0].getsockname()[1]
    _, writer = await asyncio.open_connection("127.0.0.1", port)
    staging = bytearray(len(payload))
    start = time.perf_counter()
    if pipelined:
        offsets = list(range(0, len(payload), chunk))

        def stage(offset: int) -> None:
            staging[offset : offset + chunk] = payload[offset : offset + chunk]

        pending = asyncio.create_task(asyncio.to_thread(stage, offsets[0]))
        for i, offset in enumerate(offsets):
            await pending
            if i + 1 < len(offsets):
                pending = asyncio.create_task(asyncio.to_thread(stage, offsets[i + 1]))
            writer.write(staging[offset : offset + chunk])
            await writer.drain()
    else:
        staging[:] = payload
        writer.write(staging)
        await writer.drain()
    await done
    elapsed = time.perf_counter() - start
    writer.close()
    server.close()
    await server.wait_closed()
    return elapsed


async def measure_loopback(payload_bytes: int, chunk_size: int) -> TransferReport:
    """Time both strategies over a local socket; the numbers are reported, not asserted."""
    if payload_bytes <= 0:
        raise SpecValidationError(f"payload must be positive, got {payload_bytes}")
    chunks = chunk_sizes(payload_bytes, chunk_size)
    payload = memoryview(bytes(payload_bytes))
    store = await _send_over_loopback(payload, chunk_size, pipelined=False)
    piped = await _send_over_loopback(payload, chunk_size, pipelined=True)
    return TransferReport(
        chunks=len(chunks),
        chunk_size=chunk_size,
        payload_bytes=payload_bytes,
        pipelined_s=piped,
        store_and_forward_s=store,
        measured=True,
    )
