"""Coarse per-resolution batch sizing and the normalization factor search."""

import math
from typing import Mapping, Sequence

from loguru import logger

from ditforge.balance.types import (
    AlphaSolution,
    AlphaTooLargeError,
    ResolutionBatch,
    UnreachableBatchError,
)
from ditforge.cost.flops import FlopsRow, FlopsTable
from ditforge.utils.helpers import parse_bucket
from ditforge.workload.types import NoBucketError, SpecValidationError

# Absorbs float error when alpha sits exactly on a breakpoint T/(n*F)
_FLOOR_EPS = 1e-9
_ALPHA_TOL = 1e-9

Target = str | tuple[int, int, int]


def target_row(table: FlopsTable, target: Target | None = None) -> FlopsRow:
    """Row of the target bucket; the most expensive row when unset."""
    if target is None:
        return max(table.rows, key=lambda r: r.tflops)
    frames, height, width = parse_bucket(target) if isinstance(target, str) else target
    row = table.find(frames, height, width)
    if row is None:
        raise NoBucketError(f"target bucket {frames}x{height}x{width} is not in the FLOPs table")
    return row


def _batch_size(f_target: float, alpha: float, tflops: float) -> int:
    return math.floor(f_target / (alpha * tflops) + _FLOOR_EPS)


def _resolution_batch(row: FlopsRow, size: int) -> ResolutionBatch:
    return ResolutionBatch(
        bucket=row.name,
        frames=row.frames,
        height=row.height,
        width=row.width,
        tflops=row.tflops,
        batch_size=size,
    )


def coarse_batch_sizes(
    table: FlopsTable,
    target_bucket: Target | None = None,
    alpha: float = 1.0,
) -> list[ResolutionBatch]:
    """
    Batch size per resolution so each batch costs about the target sample.

    B_r = floor(F_target / (alpha * F_r)), in table row order.
    """
    if alpha <= 0:
        raise SpecValidationError(f"alpha must be positive, got {alpha}")
    f_target = target_row(table, target_bucket).tflops
    sizes = []
    for row in table.rows:
        size = _batch_size(f_target, alpha, row.tflops)
        if size == 0:
            raise AlphaTooLargeError(
                f"alpha too large: {alpha:g} leaves {row.name} with batch size 0"
            )
        sizes.append(_resolution_batch(row, size))
    return sizes


def _weights_for(
    table: FlopsTable, weights: Mapping[str, float] | Sequence[float] | None
) -> list[float]:
    if weights is None:
        return [1.0] * len(table.rows)
    if isinstance(weights, Mapping):
        unknown = set(weights) - {r.name for r in table.rows}
        if unknown:
            raise NoBucketError(f"weights name unknown resolutions: {sorted(unknown)}")
        values = [float(weights.get(r.name, 0.0)) for r in table.rows]
    else:
        values = [float(w) for w in weights]
        if len(values) != len(table.rows):
            raise SpecValidationError(
                f"expected {len(table.rows)} weights, got {len(values)}"
            )
    if any(w < 0 for w in values) or not any(values):
        raise SpecValidationError("weights must be non-negative and not all zero")
    return values


def solve_alpha(
    table: FlopsTable,
    weights: Mapping[str, float] | Sequence[float] | None,
    global_batch: int,
    target_bucket: Target | None = None,
    caps: Mapping[str, int] | None = None,
) -> AlphaSolution:
    """
    Largest alpha whose weighted batch sizes add up to at least the global batch.

    Alpha is capped at min(F_target / F_r) so every resolution keeps a batch of at
    least one. The search bisects to a relative width of 1e-9 and then snaps to the
    breakpoint where the first batch size would drop, so exact hits are returned
    exactly.

    Args:
        table: Per-resolution FLOPs.
        weights: Per-resolution weights by bucket name or in row order; None means 1.
        global_batch: Samples per global step.
        target_bucket: Bucket whose per-sample FLOPs is the target.
        caps: Optional per-resolution upper bounds on the batch size.
    """
    w = _weights_for(table, weights)
    active = [i for i, value in enumerate(w) if value > 0]
    if global_batch < len(active):
        raise UnreachableBatchError(
            f"global batch {global_batch} is below the {len(active)} weighted resolutions"
        )
    f_target = target_row(table, target_bucket).tflops
    rows = table.rows
    cap = [(caps or {}).get(r.name) for r in rows]
    if any(c is not None and c < 1 for c in cap):
        raise SpecValidationError("batch size caps must be >= 1")

    def sizes_at(alpha: float) -> list[int]:
        out = []
        for row, limit in zip(rows, cap):
            size = _batch_size(f_target, alpha, row.tflops)
            out.append(size if limit is None else min(size, limit))
        return out

    def total_at(alpha: float) -> float:
        return sum(w[i] * s for i, s in enumerate(sizes_at(alpha)))

    if any(c is not None for c in cap) and all(cap[i] is not None for i in active):
        ceiling = sum(w[i] * cap[i] for i in active)
        if ceiling < global_batch:
            raise UnreachableBatchError(
                f"caps allow at most {ceiling:g} samples, below global batch {global_batch}"
            )

    alpha_max = min(f_target / row.tflops for row in rows)
    if total_at(alpha_max) >= global_batch:
        alpha = alpha_max
    else:
        hi, lo = alpha_max, alpha_max / 2
        while total_at(lo) < global_batch:
            hi, lo = lo, lo / 2
            if lo < 1e-12:
                raise UnreachableBatchError(f"no alpha reaches global batch {global_batch}")
        while hi - lo > _ALPHA_TOL * hi:
            mid = (lo + hi) / 2
            if total_at(mid) >= global_batch:
                lo = mid
            else:
                hi = mid
        # Sizes are constant on (lo, min T/(F_r*B_r)], so that bound is the answer
        lo_sizes = sizes_at(lo)
        alpha = min(
            f_target / (row.tflops * size) for row, size in zip(rows, lo_sizes) if size > 0
        )
        if total_at(alpha) < global_batch:
            alpha = lo

    sizes = sizes_at(alpha)
    total = total_at(alpha)
    solution = AlphaSolution(
        alpha=alpha,
        sizes=[_resolution_batch(row, size) for row, size in zip(rows, sizes)],
        total=total,
        exact=math.isclose(total, global_batch, rel_tol=0, abs_tol=1e-9),
    )
    logger.debug(f"alpha={alpha:.9g} total={total:g} target={global_batch} exact={solution.exact}")
    return solution
