"""Event simulation of (interleaved) one-forward-one-backward pipeline schedules."""

from dataclasses import dataclass
from typing import Literal

from ditforge.workload.types import SpecValidationError

OpKind = Literal["F", "B"]


@dataclass(frozen=True)
class PipelineResult:
    """Outcome of one simulated iteration."""
    makespan_s: float
    bubble_fraction: float
    ops: int  # Chunk-level forward and backward ops executed across devices


def closed_form_bubble(pp: int, vpp: int, micro_batches: int) -> float:
    return (pp - 1) / (vpp * micro_batches + pp - 1)


def round_size(pp: int, micro_batches: int) -> int:
    """Microbatches that pass through every chunk before the next round starts."""
    return pp if micro_batches % pp == 0 else micro_batches


def _chunk(ordinal: int, group: int, vpp: int) -> int:
    return (ordinal % (group * vpp)) // group


def _microbatch(ordinal: int, group: int, vpp: int) -> int:
    return (ordinal // (group * vpp)) * group + ordinal % group


def device_schedule(device: int, pp: int, vpp: int, micro_batches: int) -> list[tuple[OpKind, int, int]]:
    """
    Op order (kind, microbatch, chunk) for one device.

    Devices warm up with forwards, alternate one forward and one backward in
    steady state, then drain the remaining backwards. Interleaved microbatches
    advance in rounds of pp; when m is not a multiple of pp they form a single
    round, and that round runs every forward before the first backward.
    """
    m = micro_batches
    total = m * vpp
    if vpp == 1:
        warmup = min(pp - device - 1, m)
        forwards = [("F", j, 0) for j in range(m)]
        backwards = [("B", j, 0) for j in range(m)]
    else:
        group = round_size(pp, m)
        if group == m:
            warmup = total
        else:
            warmup = min((pp - device - 1) * 2 + (vpp - 1) * pp, total)
        forwards = [("F", _microbatch(i, group, vpp), _chunk(i, group, vpp)) for i in range(total)]
        backwards = [
            ("B", _microbatch(i, group, vpp), vpp - 1 - _chunk(i, group, vpp)) for i in range(total)
        ]

    order = list(forwards[:warmup])
    for step in range(total - warmup):
        order.append(forwards[warmup + step])
        order.append(backwards[step])
    order.extend(backwards[total - warmup:])
    return order


def simulate_pipeline(
    pp: int,
    vpp: int,
    micro_batches: int,
    stage_fwd_s: float,
    stage_bwd_s: float,
) -> PipelineResult:
    """
    Simulate one iteration and return its makespan and bubble fraction.

    Args:
        pp: Pipeline stages (devices).
        vpp: Model chunks per device.
        micro_batches: Microbatches per iteration.
        stage_fwd_s: Forward time of one microbatch through one device's layers.
        stage_bwd_s: Backward time of the same.
    """
    if pp < 1 or vpp < 1 or micro_batches < 1:
        raise SpecValidationError(f"pp, vpp and micro_batches must be >= 1 (got {pp}, {vpp}, {micro_batches})")
    if stage_fwd_s <= 0 or stage_bwd_s <= 0:
        raise SpecValidationError("stage times must be positive")
    if vpp > 1 and pp == 1:
        raise SpecValidationError(f"interleaving needs pp > 1 (vpp={vpp})")

    busy = micro_batches * (stage_fwd_s + stage_bwd_s)
    if pp == 1:
        return PipelineResult(makespan_s=busy, bubble_fraction=0.0, ops=2 * micro_batches)

    fwd = stage_fwd_s / vpp
    bwd = stage_bwd_s / vpp
    last_stage = pp * vpp - 1
    orders = [device_schedule(d, pp, vpp, micro_batches) for d in range(pp)]
    cursor = [0] * pp
    free_at = [0.0] * pp
    done: dict[tuple[OpKind, int, int], float] = {}
    remaining = sum(len(o) for o in orders)

    # Each op starts when its device is idle and its producer op has finished.
    while remaining:
        progressed = False
        for device in range(pp):
            order = orders[device]
            while cursor[device] < len(order):
                kind, mb, chunk = order[cursor[device]]
                stage = chunk * pp + device
                if kind == "F":
                    deps = [("F", mb, stage - 1)] if stage > 0 else []
                else:
                    deps = [("F", mb, stage)]
                    if stage < last_stage:
                        deps.append(("B", mb, stage + 1))
                if any(dep not in done for dep in deps):
                    break
                start = max([free_at[device]] + [done[dep] for dep in deps])
                end = start + (fwd if kind == "F" else bwd)
                done[(kind, mb, stage)] = end
                free_at[device] = end
                cursor[device] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            raise RuntimeError(f"pipeline schedule stalled with {remaining} ops left")

    makespan = max(free_at)
    return PipelineResult(
        makespan_s=makespan,
        bubble_fraction=max(0.0, 1.0 - busy / makespan),
        ops=len(done),
    )
