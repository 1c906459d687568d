"""Frame buckets and latent token grids."""

from typing import Iterable, Mapping

from pydantic import ValidationError

from ditforge.utils.helpers import parse_bucket
from ditforge.workload.types import NoBucketError, ResolutionBucket, SpecValidationError

# Latent frames per frame bucket, recovered by calibrating the cost model
DEFAULT_LATENT_TABLE: dict[int, int] = {1: 1, 68: 12, 136: 24, 204: 36}
DEFAULT_PATCH = 16


def derive_latent_shape(
    frames: int,
    height: int,
    width: int,
    latent_table: Mapping[int, int] | None = None,
    patch: int = DEFAULT_PATCH,
) -> ResolutionBucket:
    """
    Resolve a bucket request to its latent grid.

    Args:
        frames: Frame bucket; must be a key of the latent table.
        height: Pixel height, divisible by patch.
        width: Pixel width, divisible by patch.
        latent_table: Frame bucket -> latent frame count.
        patch: Spatial pixels per latent cell.

    Returns:
        The bucket with latent dimensions filled in.
    """
    table = DEFAULT_LATENT_TABLE if latent_table is None else latent_table
    if frames not in table:
        known = ", ".join(str(f) for f in sorted(table))
        raise NoBucketError(f"no bucket for {frames} frames (configured: {known})")
    if patch <= 0:
        raise SpecValidationError(f"patch must be positive, got {patch}")
    if height % patch or width % patch:
        raise SpecValidationError(
            f"pixels {height}x{width} not divisible by patch size {patch}"
        )
    try:
        return ResolutionBucket(
            frames=frames,
            height=height,
            width=width,
            latent_frames=table[frames],
            latent_height=height // patch,
            latent_width=width // patch,
        )
    except ValidationError as e:
        raise SpecValidationError(f"invalid bucket {frames}x{height}x{width}: {e}") from e


def bucket_from_string(
    text: str,
    latent_table: Mapping[int, int] | None = None,
    patch: int = DEFAULT_PATCH,
) -> ResolutionBucket:
    """Resolve "204x544x992" into a ResolutionBucket."""
    frames, height, width = parse_bucket(text)
    return derive_latent_shape(frames, height, width, latent_table, patch)


def assign_frame_bucket(frames: int, buckets: Iterable[int]) -> int:
    """Largest configured bucket not exceeding the clip's frame count."""
    if frames < 1:
        raise SpecValidationError(f"frames must be >= 1, got {frames}")
    eligible = [b for b in buckets if b <= frames]
    if not eligible:
        raise NoBucketError(f"no bucket holds a clip of {frames} frames")
    return max(eligible)
