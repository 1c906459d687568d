"""Mixed-resolution data-parallel load balancing."""

from ditforge.balance.bucketize import bucketize, closest_aspect
from ditforge.balance.coarse import coarse_batch_sizes, solve_alpha, target_row
from ditforge.balance.fine import brute_force_pad, greedy_pad, image_budget
from ditforge.balance.planner import (
    ClipRecord,
    StreamingPlanner,
    balancer_config,
    plan_clips,
    read_manifest,
    resolve_row,
)
from ditforge.balance.types import (
    AlphaSolution,
    AlphaTooLargeError,
    BalancerConfig,
    BatchPlan,
    BucketAssignment,
    InstanceTooLargeError,
    ManifestError,
    PaddedBatch,
    PadResult,
    ResolutionBatch,
    UnreachableBatchError,
)

__all__ = [
    "AlphaSolution",
    "AlphaTooLargeError",
    "BalancerConfig",
    "BatchPlan",
    "BucketAssignment",
    "ClipRecord",
    "InstanceTooLargeError",
    "ManifestError",
    "PadResult",
    "PaddedBatch",
    "ResolutionBatch",
    "StreamingPlanner",
    "UnreachableBatchError",
    "balancer_config",
    "brute_force_pad",
    "bucketize",
    "closest_aspect",
    "coarse_batch_sizes",
    "greedy_pad",
    "image_budget",
    "plan_clips",
    "read_manifest",
    "resolve_row",
    "solve_alpha",
    "target_row",
]
