"""Frame and aspect-ratio bucket assignment for raw clips."""

import math
from typing import Iterable, Mapping

from ditforge.balance.types import BucketAssignment
from ditforge.workload.shapes import assign_frame_bucket
from ditforge.workload.types import SpecValidationError

DEFAULT_FRAME_BUCKETS = (1, 68, 136, 204)
DEFAULT_ASPECT_RATIOS: dict[str, float] = {"landscape": 9 / 16, "portrait": 16 / 9, "square": 1.0}


def closest_aspect(height: int, width: int, aspect_ratios: Mapping[str, float]) -> str:
    """Aspect bucket whose canonical height/width ratio is closest in log space."""
    if height <= 0 or width <= 0:
        raise SpecValidationError(f"pixels must be positive, got {height}x{width}")
    if not aspect_ratios:
        raise SpecValidationError("no aspect buckets configured")
    log_ratio = math.log(height / width)
    return min(aspect_ratios, key=lambda name: abs(log_ratio - math.log(aspect_ratios[name])))


def bucketize(
    frames: int,
    height: int,
    width: int,
    frame_buckets: Iterable[int] = DEFAULT_FRAME_BUCKETS,
    aspect_ratios: Mapping[str, float] | None = None,
) -> BucketAssignment:
    return BucketAssignment(
        frame_bucket=assign_frame_bucket(frames, frame_buckets),
        aspect=closest_aspect(height, width, aspect_ratios or DEFAULT_ASPECT_RATIOS),
    )
