"""Balancer documents and errors."""

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ditforge.errors import DitforgeError


class AlphaTooLargeError(DitforgeError):
    """Raised when alpha leaves some resolution with an empty batch."""


class UnreachableBatchError(DitforgeError):
    """Raised when no alpha reaches the requested global batch."""


class InstanceTooLargeError(DitforgeError):
    """Raised when the exhaustive padding oracle is asked to solve a large instance."""


class ManifestError(DitforgeError):
    """Raised for unreadable or malformed clip manifests."""


class BalancerConfig(BaseModel):
    """Inputs of one balancing pass, all in TFLOPs per sample where applicable."""

    model_config = ConfigDict(frozen=True)

    f_target: float = Field(gt=0)
    alpha: float = Field(1.0, gt=0)
    beta: float = Field(0.1, ge=0)
    cache_n: int = Field(8, gt=0)
    image_flops: float = Field(gt=0)


class ResolutionBatch(BaseModel):
    """Coarse batch size of one resolution."""
    bucket: str
    frames: int
    height: int
    width: int
    tflops: float
    batch_size: int = Field(ge=1)

    @property
    def batch_flops(self) -> float:
        return self.batch_size * self.tflops


class AlphaSolution(BaseModel):
    alpha: float
    sizes: list[ResolutionBatch]
    total: float  # Weighted sum of batch sizes at alpha
    exact: bool


class PaddedBatch(BaseModel):
    """A video batch after image padding."""
    batch_id: int
    base_flops: float
    images_added: int = Field(ge=0)
    final_flops: float
    bucket: str | None = None
    sample_ids: list[str] = Field(default_factory=list)
    image_ids: list[str] = Field(default_factory=list)


class PadResult(BaseModel):
    batches: list[PaddedBatch]
    trace: list[int]  # Batch id receiving each image, in allocation order

    @property
    def max_flops(self) -> float:
        return max(b.final_flops for b in self.batches)


class BucketAssignment(BaseModel):
    model_config = ConfigDict(frozen=True)

    frame_bucket: int
    aspect: str


class BatchPlan(BaseModel):
    per_resolution: list[ResolutionBatch]
    padded_batches: list[PaddedBatch] = Field(default_factory=list)
    leftover_videos: list[str] = Field(default_factory=list)
    unused_images: list[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _final_matches_images(self) -> "BatchPlan":
        for batch in self.padded_batches:
            if batch.images_added != len(batch.image_ids) and batch.image_ids:
                raise ValueError(f"batch {batch.batch_id}: image ids do not match images_added")
        return self
