from __future__ import annotations

import asyncio

import pytest
from pydantic import ValidationError

from ditforge.config.schema import RpcSettings
from ditforge.rpc.frame import DType, Frame
from ditforge.rpc.registry import (
    BackpressureTimeoutError,
    ConsumerHandle,
    PipeClosedError,
    PipeConflictError,
    PipeDecl,
    PipeRegistry,
    ProducerHandle,
    SequenceError,
)

PIPE = "latents"


def _frame(seq_no: int, name: str = PIPE) -> Frame:
    return Frame(seq_no=seq_no, name=name, dtype=DType.uint8, shape=(1,), payload=bytes([seq_no % 256]))


def _consumer(registry: PipeRegistry, job: str, endpoint: str, mode: str = "broadcast") -> ConsumerHandle:
    handle = registry.declare(PipeDecl(name=PIPE, role="consumer", job_id=job, mode=mode, endpoint=endpoint))
    assert isinstance(handle, ConsumerHandle)
    return handle


def _producer(registry: PipeRegistry, mode: str = "broadcast") -> ProducerHandle:
    handle = registry.declare(PipeDecl(name=PIPE, role="producer", mode=mode))
    assert isinstance(handle, ProducerHandle)
    return handle


async def _collect(handle: ConsumerHandle) -> list[int]:
    return [frame.seq_no async for frame in handle]


async def test_spray_round_robins_within_the_job() -> None:
    registry = PipeRegistry()
    consumers = [_consumer(registry, "job0", f"c{i}", mode="spray") for i in range(3)]
    producer = _producer(registry, mode="spray")

    for seq in range(10):
        await producer.send(_frame(seq))
    await producer.close()
    received = [await _collect(c) for c in consumers]

    assert received == [[0, 3, 6, 9], [1, 4, 7], [2, 5, 8]]
    assert sorted(s for r in received for s in r) == list(range(10))


async def test_spray_splits_evenly_and_never_duplicates() -> None:
    registry = PipeRegistry()
    consumers = [_consumer(registry, "job0", f"c{i}", mode="spray") for i in range(3)]
    producer = _producer(registry, mode="spray")
    readers = [asyncio.create_task(_collect(c)) for c in consumers]

    for seq in range(999):
        await producer.send(_frame(seq))
    await producer.close()
    received = await asyncio.gather(*readers)

    assert [len(r) for r in received] == [333, 333, 333]
    seen = [set(r) for r in received]
    assert not (seen[0] & seen[1] or seen[0] & seen[2] or seen[1] & seen[2])
    assert set().union(*seen) == set(range(999))
    assert all(s % 3 == i for i, r in enumerate(received) for s in r)
    assert registry.metrics(PIPE).dropped == 0


async def test_broadcast_gives_every_job_a_copy() -> None:
    registry = PipeRegistry()
    first = _consumer(registry, "job0", "a")
    second = _consumer(registry, "job1", "b")
    producer = _producer(registry)

    for seq in range(10):
        ack = await producer.send(_frame(seq))
        assert sorted(ack.delivered) == ["job0", "job1"]
    await producer.close()

    assert await _collect(first) == list(range(10))
    assert await _collect(second) == list(range(10))
    metrics = registry.metrics(PIPE)
    assert (metrics.sent, metrics.produced, metrics.consumed) == (10, 20, 20)


async def test_recv_after_end_of_stream_keeps_returning_none() -> None:
    registry = PipeRegistry()
    consumer = _consumer(registry, "job0", "a")
    producer = _producer(registry)

    await producer.send(_frame(0))
    await producer.close()

    assert (await consumer.recv()).seq_no == 0
    assert await consumer.recv() is None
    assert await consumer.recv() is None


async def test_consumer_joining_an_ended_pipe_sees_end_of_stream() -> None:
    registry = PipeRegistry()
    producer = _producer(registry)
    await producer.close()

    late = _consumer(registry, "job0", "late")

    assert await asyncio.wait_for(late.recv(), 1.0) is None


async def test_stall_alarm_when_lag_exceeds_window() -> None:
    registry = PipeRegistry(RpcSettings(queue_depth=128))
    consumer = _consumer(registry, "job0", "a")
    producer = _producer(registry)

    for seq in range(100):
        await producer.send(_frame(seq))
    for _ in range(40):
        await consumer.recv()

    metrics = consumer.metrics(window=30)
    assert metrics.produced == 100
    assert metrics.consumed == 40
    assert metrics.stall
    assert metrics.stalled_jobs == ["job0"]
    assert not registry.metrics(PIPE, window=60).stall


def test_unknown_pipe_reads_as_idle() -> None:
    metrics = PipeRegistry().metrics("nothing-here")

    assert (metrics.sent, metrics.produced, metrics.consumed, metrics.dropped) == (0, 0, 0, 0)
    assert not metrics.stall


async def test_blocked_job_times_out_without_holding_back_others() -> None:
    registry = PipeRegistry(RpcSettings(queue_depth=2, send_deadline_s=0.2))
    fast = _consumer(registry, "A", "fast")
    _consumer(registry, "B", "stuck")
    producer = _producer(registry)
    reader = asyncio.create_task(_collect(fast))

    failures = []
    for seq in range(5):
        try:
            await producer.send(_frame(seq))
        except BackpressureTimeoutError as e:
            failures.append(e.jobs)
    await producer.close()

    assert failures == [["B"], ["B"], ["B"]]
    assert await asyncio.wait_for(reader, 2.0) == list(range(5))
    groups = {g.job_id: g for g in registry.metrics(PIPE).groups}
    assert groups["B"].dropped == 3
    assert groups["B"].in_queue == 2


async def test_drop_policy_discards_on_full_queue() -> None:
    registry = PipeRegistry(RpcSettings(queue_depth=2, policy="drop"))
    _consumer(registry, "job0", "a")
    producer = _producer(registry)

    acks = [await producer.send(_frame(seq)) for seq in range(4)]

    assert [a.dropped for a in acks] == [[], [], ["job0"], ["job0"]]
    assert registry.metrics(PIPE).dropped == 2


async def test_leaving_consumer_queue_is_resprayed() -> None:
    registry = PipeRegistry()
    leaver = _consumer(registry, "job0", "c0", mode="spray")
    stayer = _consumer(registry, "job0", "c1", mode="spray")
    producer = _producer(registry, mode="spray")

    for seq in range(6):
        await producer.send(_frame(seq))
    first = await leaver.recv()
    await leaver.close()
    await producer.close()

    assert first.seq_no == 0
    assert sorted(await _collect(stayer)) == [1, 2, 3, 4, 5]
    assert registry.metrics(PIPE).dropped == 0


async def test_least_outstanding_prefers_shorter_queue() -> None:
    registry = PipeRegistry(RpcSettings(spray="least_outstanding"))
    busy = _consumer(registry, "job0", "busy", mode="spray")
    idle = _consumer(registry, "job0", "idle", mode="spray")
    producer = _producer(registry, mode="spray")

    await producer.send(_frame(0))
    await producer.send(_frame(1))
    await busy.recv()
    await producer.send(_frame(2))

    assert (busy.outstanding, idle.outstanding) == (1, 1)


async def test_sequence_numbers_must_increase() -> None:
    producer = _producer(PipeRegistry())

    await producer.send(_frame(1))

    with pytest.raises(SequenceError, match="not above 1"):
        await producer.send(_frame(1))


async def test_closed_producer_rejects_sends() -> None:
    producer = _producer(PipeRegistry())
    await producer.close()

    with pytest.raises(PipeClosedError):
        await producer.send(_frame(0))


async def test_frame_name_must_match_pipe() -> None:
    producer = _producer(PipeRegistry())

    with pytest.raises(PipeConflictError, match="sent on pipe"):
        await producer.send(_frame(0, name="other"))


async def test_spray_rotates_frames_over_jobs() -> None:
    registry = PipeRegistry()
    job0 = [_consumer(registry, "job0", f"a{i}", mode="spray") for i in range(2)]
    job1 = _consumer(registry, "job1", "b0", mode="spray")
    producer = _producer(registry, mode="spray")

    acks = [await producer.send(_frame(seq)) for seq in range(12)]
    await producer.close()

    assert [ack.delivered for ack in acks[:2]] == [["job0"], ["job1"]]
    assert [await _collect(c) for c in job0] == [[0, 4, 8], [2, 6, 10]]
    assert await _collect(job1) == [1, 3, 5, 7, 9, 11]
    metrics = registry.metrics(PIPE)
    assert (metrics.sent, metrics.produced, metrics.consumed) == (12, 12, 12)


def test_mode_conflict_is_rejected() -> None:
    registry = PipeRegistry()
    _consumer(registry, "job0", "a")

    with pytest.raises(PipeConflictError, match="is broadcast"):
        _consumer(registry, "job0", "b", mode="spray")


def test_duplicate_endpoint_is_rejected() -> None:
    registry = PipeRegistry()
    _consumer(registry, "job0", "a")

    with pytest.raises(PipeConflictError, match="already declared"):
        _consumer(registry, "job0", "a")


@pytest.mark.parametrize(
    "fields",
    [
        {"name": PIPE, "role": "consumer", "job_id": "j", "mode": "multicast"},
        {"name": PIPE, "role": "producer", "job_id": "j"},
        {"name": PIPE, "role": "consumer"},
        {"name": "$hello", "role": "consumer", "job_id": "j"},
        {"name": "", "role": "consumer", "job_id": "j"},
    ],
)
def test_invalid_declarations(fields: dict) -> None:
    with pytest.raises(ValidationError):
        PipeDecl(**fields)
