"""Fine-grained image padding of cached video batches."""

import heapq
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Sequence

from ditforge.balance.types import InstanceTooLargeError, PaddedBatch, PadResult
from ditforge.workload.types import SpecValidationError

ORACLE_MAX_BATCHES = 6
ORACLE_MAX_IMAGES = 10


def image_budget(video_counts: int | Sequence[int], beta: float) -> int:
    """Images to add for the cached videos: round(beta * videos), half to even."""
    if beta < 0:
        raise SpecValidationError(f"beta must be >= 0, got {beta}")
    total = video_counts if isinstance(video_counts, int) else sum(video_counts)
    # Fraction(str()) keeps 0.1 * 25 at exactly 2.5
    return round(Fraction(str(beta)) * total)


def greedy_pad(bases: Sequence[float], budget: int, image_flops: float) -> PadResult:
    """
    Give each image to the batch with the smallest current FLOPs.

    Ties go to the lowest batch id, so the allocation trace is reproducible.
    """
    if budget < 0:
        raise SpecValidationError(f"image budget must be >= 0, got {budget}")
    if image_flops <= 0:
        raise SpecValidationError(f"image FLOPs must be positive, got {image_flops}")
    counts = [0] * len(bases)
    trace: list[int] = []
    if bases:
        heap = [(base, i) for i, base in enumerate(bases)]
        heapq.heapify(heap)
        for _ in range(budget):
            _, i = heapq.heappop(heap)
            counts[i] += 1
            trace.append(i)
            heapq.heappush(heap, (bases[i] + counts[i] * image_flops, i))
    batches = [
        PaddedBatch(
            batch_id=i,
            base_flops=base,
            images_added=counts[i],
            final_flops=base + counts[i] * image_flops,
        )
        for i, base in enumerate(bases)
    ]
    return PadResult(batches=batches, trace=trace)


def brute_force_pad(bases: Sequence[float], budget: int, image_flops: float) -> float:
    """Smallest achievable max batch FLOPs over every allocation of the images."""
    if not bases:
        raise SpecValidationError("need at least one batch")
    if len(bases) > ORACLE_MAX_BATCHES or budget > ORACLE_MAX_IMAGES:
        raise InstanceTooLargeError(
            f"instance too large for exhaustive search: {len(bases)} batches, {budget} images "
            f"(limits {ORACLE_MAX_BATCHES}, {ORACLE_MAX_IMAGES})"
        )
    if budget < 0:
        raise SpecValidationError(f"image budget must be >= 0, got {budget}")
    best = float("inf")
    # Images are identical, so each multiset of batch ids is one allocation
    for allocation in combinations_with_replacement(range(len(bases)), budget):
        counts = [0] * len(bases)
        for i in allocation:
            counts[i] += 1
        best = min(best, max(b + c * image_flops for b, c in zip(bases, counts)))
    return best
