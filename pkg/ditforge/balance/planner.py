"""Streaming batch planner over a clip manifest."""

import json
import math
from pathlib import Path
from typing import Iterable, Mapping

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, ValidationError

from ditforge.balance.bucketize import DEFAULT_ASPECT_RATIOS, bucketize
from ditforge.balance.coarse import Target, coarse_batch_sizes, target_row
from ditforge.balance.fine import greedy_pad, image_budget
from ditforge.balance.types import BalancerConfig, BatchPlan, ManifestError, PaddedBatch
from ditforge.cost.flops import FlopsRow, FlopsTable
from ditforge.workload.types import NoBucketError


class ClipRecord(BaseModel):
    """One line of a clip manifest."""

    model_config = ConfigDict(extra="ignore")

    id: str
    frames: PositiveInt
    height: PositiveInt
    width: PositiveInt
    source_url: str | None = None
    duration_s: float | None = Field(None, ge=0)


def read_manifest(path: Path) -> list[ClipRecord]:
    """Parse a JSONL manifest; blank lines are skipped."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ManifestError(f"{path}: cannot read manifest ({e})") from e
    clips = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            clips.append(ClipRecord.model_validate(json.loads(line)))
        except (json.JSONDecodeError, ValidationError) as e:
            raise ManifestError(f"{path}:{lineno}: bad clip record ({e})") from e
    return clips


def resolve_row(table: FlopsTable, frame_bucket: int, height: int, width: int) -> FlopsRow:
    """Table row with the same frame bucket and the closest aspect ratio."""
    candidates = [row for row in table.rows if row.frames == frame_bucket]
    if not candidates:
        raise NoBucketError(f"FLOPs table has no row for {frame_bucket} frames")
    log_ratio = math.log(height / width)
    return min(candidates, key=lambda r: abs(math.log(r.height / r.width) - log_ratio))


def balancer_config(
    table: FlopsTable,
    target: Target | None = None,
    alpha: float = 1.0,
    beta: float = 0.1,
    cache_n: int = 8,
) -> BalancerConfig:
    """Config whose image cost is the cheapest single-frame row of the table."""
    images = [row.tflops for row in table.rows if row.frames == 1]
    if not images:
        raise NoBucketError("FLOPs table has no single-frame row for image padding")
    return BalancerConfig(
        f_target=target_row(table, target).tflops,
        alpha=alpha,
        beta=beta,
        cache_n=cache_n,
        image_flops=min(images),
    )


class _VideoBatch(BaseModel):
    bucket: str
    base_flops: float
    sample_ids: list[str]


class StreamingPlanner:
    """
    Build padded batches clip by clip.

    Videos fill per-resolution batches of the coarse size. Once N video batches
    are cached, images are spread over them greedily and the padded batches are
    emitted. Confined to one thread.
    """

    def __init__(
        self,
        table: FlopsTable,
        target: Target | None = None,
        config: BalancerConfig | None = None,
        frame_buckets: Iterable[int] | None = None,
        aspect_ratios: Mapping[str, float] | None = None,
    ):
        self.table = table
        self.config = config or balancer_config(table, target)
        self.frame_buckets = list(frame_buckets or table.frame_buckets)
        self.aspect_ratios = dict(aspect_ratios or DEFAULT_ASPECT_RATIOS)
        self.per_resolution = coarse_batch_sizes(table, target, self.config.alpha)
        self._sizes = {r.bucket: r.batch_size for r in self.per_resolution}
        self._tflops = {r.bucket: r.tflops for r in self.per_resolution}
        self._pending: dict[str, list[str]] = {}
        self._cache: list[_VideoBatch] = []
        self._images: list[str] = []
        self._emitted: list[PaddedBatch] = []
        self._next_id = 0

    @property
    def emitted(self) -> list[PaddedBatch]:
        return list(self._emitted)

    def add(self, clip: ClipRecord) -> list[PaddedBatch]:
        """Route one clip; returns batches emitted by this call."""
        assignment = bucketize(
            clip.frames, clip.height, clip.width, self.frame_buckets, self.aspect_ratios
        )
        if assignment.frame_bucket == 1:
            self._images.append(clip.id)
            return []
        row = resolve_row(self.table, assignment.frame_bucket, clip.height, clip.width)
        pending = self._pending.setdefault(row.name, [])
        pending.append(clip.id)
        if len(pending) < self._sizes[row.name]:
            return []
        self._cache.append(
            _VideoBatch(bucket=row.name, base_flops=len(pending) * row.tflops, sample_ids=pending)
        )
        self._pending[row.name] = []
        logger.debug(f"Video batch {row.name} filled ({len(self._cache)}/{self.config.cache_n} cached)")
        if len(self._cache) >= self.config.cache_n:
            return self.flush()
        return []

    def flush(self) -> list[PaddedBatch]:
        """Pad the cached video batches with images and emit them."""
        if not self._cache:
            return []
        videos = sum(len(b.sample_ids) for b in self._cache)
        wanted = image_budget(videos, self.config.beta)
        budget = min(wanted, len(self._images))
        if budget < wanted:
            logger.warning(f"Image pool short: {len(self._images)} available, {wanted} wanted")
        padded = greedy_pad([b.base_flops for b in self._cache], budget, self.config.image_flops)
        images, self._images = self._images[:budget], self._images[budget:]

        out = []
        for batch, cached in zip(padded.batches, self._cache):
            out.append(
                batch.model_copy(
                    update={
                        "batch_id": self._next_id + batch.batch_id,
                        "bucket": cached.bucket,
                        "sample_ids": cached.sample_ids,
                        "image_ids": [],
                    }
                )
            )
        for image, target in zip(images, padded.trace):
            out[target].image_ids.append(image)

        self._next_id += len(out)
        self._cache = []
        self._emitted.extend(out)
        logger.info(f"Emitted {len(out)} padded batches with {budget} images")
        return out

    def finish(self) -> BatchPlan:
        """Flush the partial cache and report what could not be batched."""
        self.flush()
        leftovers = [clip for ids in self._pending.values() for clip in ids]
        return BatchPlan(
            per_resolution=self.per_resolution,
            padded_batches=self.emitted,
            leftover_videos=leftovers,
            unused_images=list(self._images),
        )


def plan_clips(
    clips: Iterable[ClipRecord],
    table: FlopsTable,
    target: Target | None = None,
    config: BalancerConfig | None = None,
    frame_buckets: Iterable[int] | None = None,
    aspect_ratios: Mapping[str, float] | None = None,
) -> BatchPlan:
    planner = StreamingPlanner(table, target, config, frame_buckets, aspect_ratios)
    for clip in clips:
        planner.add(clip)
    return planner.finish()
