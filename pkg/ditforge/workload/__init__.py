"""Workload, hardware and parallelism descriptions."""

from ditforge.workload.loader import load_cluster_spec, load_model_spec, load_parallelism
from ditforge.workload.shapes import (
    DEFAULT_LATENT_TABLE,
    DEFAULT_PATCH,
    assign_frame_bucket,
    bucket_from_string,
    derive_latent_shape,
)
from ditforge.workload.types import (
    REFERENCE_PIXELS,
    ClusterSpec,
    ModelSpec,
    NoBucketError,
    ParallelismConfig,
    ResolutionBucket,
    SpecValidationError,
    ValidationDiagnostic,
    ValidationReport,
)
from ditforge.workload.validate import validate_config

__all__ = [
    "DEFAULT_LATENT_TABLE",
    "DEFAULT_PATCH",
    "REFERENCE_PIXELS",
    "ClusterSpec",
    "ModelSpec",
    "NoBucketError",
    "ParallelismConfig",
    "ResolutionBucket",
    "SpecValidationError",
    "ValidationDiagnostic",
    "ValidationReport",
    "assign_frame_bucket",
    "bucket_from_string",
    "derive_latent_shape",
    "load_cluster_spec",
    "load_model_spec",
    "load_parallelism",
    "validate_config",
]
