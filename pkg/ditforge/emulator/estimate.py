"""Per-iteration time and MFU of one parallelism config."""

from pydantic import BaseModel, ConfigDict, Field

from ditforge.config.schema import EmulatorSettings
from ditforge.cost.comm import CommReport, comm_volumes
from ditforge.cost.flops import CostCoefficients, default_coefficients, sample_flops
from ditforge.cost.memory import MemoryReport, activation_bytes_per_token, memory_breakdown
from ditforge.emulator.pipeline import simulate_pipeline
from ditforge.errors import DitforgeError
from ditforge.workload.types import (
    ClusterSpec,
    ModelSpec,
    ParallelismConfig,
    ResolutionBucket,
    SpecValidationError,
)
from ditforge.workload.validate import validate_config

# Backward costs twice the forward, so forward is a third of a training step
FORWARD_SHARE = 1.0 / 3.0


class InfeasibleConfigError(DitforgeError):
    """Raised when a config does not fit in GPU memory."""

    def __init__(self, message: str, memory: MemoryReport):
        super().__init__(message)
        self.memory = memory


class ModelInconsistencyError(DitforgeError):
    """Raised when derived utilization exceeds the hardware peak."""


class OverlapModel(BaseModel):
    """Scalar efficiencies standing in for kernel-level overlap."""

    model_config = ConfigDict(frozen=True)

    kernel_efficiency: float = Field(0.55, gt=0, le=1)
    tp_overlap_eff: float = Field(0.8, ge=0, le=1)
    dp_overlap: bool = True

    @classmethod
    def from_settings(cls, settings: EmulatorSettings) -> "OverlapModel":
        return cls(
            kernel_efficiency=settings.kernel_efficiency,
            tp_overlap_eff=settings.tp_overlap_eff,
            dp_overlap=settings.dp_overlap,
        )


class IterationEstimate(BaseModel):
    compute_s: float
    exposed_comm_s: float
    bubble_fraction: float = Field(ge=0, lt=1)
    iteration_s: float
    mfu: float = Field(gt=0, le=1)
    useful_tflops: float
    memory: MemoryReport
    comm: CommReport


def mfu(useful_tflops_per_iter: float, iteration_s: float, cluster: ClusterSpec) -> float:
    """Useful work over aggregate peak for the iteration's duration."""
    if useful_tflops_per_iter <= 0 or iteration_s <= 0:
        raise SpecValidationError("useful work and iteration time must be positive")
    value = useful_tflops_per_iter / (iteration_s * cluster.peak_tflops)
    if value > 1.0 + 1e-9:
        raise ModelInconsistencyError(
            f"MFU {value:.4f} exceeds 1: {useful_tflops_per_iter} TFLOPs in {iteration_s} s "
            f"on {cluster.peak_tflops} TFLOP/s"
        )
    return min(value, 1.0)


def estimate_iteration(
    model: ModelSpec,
    cfg: ParallelismConfig,
    cluster: ClusterSpec,
    bucket: ResolutionBucket,
    batch_per_dp_rank: int,
    overlap: OverlapModel | None = None,
    coeffs: CostCoefficients | None = None,
    settings: EmulatorSettings | None = None,
) -> IterationEstimate:
    """
    Combine compute, pipeline bubble and exposed communication into one step time.

    Args:
        model: Model dimensions.
        cfg: Sharding strategy; must pass validate_config.
        cluster: Hardware.
        bucket: Resolution every sample in the batch belongs to.
        batch_per_dp_rank: Samples per data-parallel replica, split evenly over microbatches.
        overlap: Overlap efficiencies; defaults from settings.
        coeffs: FLOPs model; defaults to the calibrated reference table.
        settings: Emulator settings.
    """
    settings = settings or EmulatorSettings()
    overlap = overlap or OverlapModel.from_settings(settings)
    coeffs = coeffs or default_coefficients()
    validate_config(cfg, cluster).raise_for_errors()
    if batch_per_dp_rank < 1:
        raise SpecValidationError(f"batch_per_dp_rank must be >= 1, got {batch_per_dp_rank}")

    m = cfg.micro_batches
    microbatch_size = batch_per_dp_rank / m
    memory = memory_breakdown(
        model,
        cfg,
        bucket,
        activation_bytes_per_token(model, settings),
        settings.ckpt_residual,
        microbatch_size,
    )
    if memory.total_gb > cluster.hbm_gb:
        raise InfeasibleConfigError(
            f"memory: {memory.total_gb:.1f} GB per GPU exceeds {cluster.hbm_gb:g} GB HBM", memory
        )

    per_sample = sample_flops(coeffs, bucket)
    useful = per_sample * batch_per_dp_rank * cfg.dp
    # Recomputing checkpointed layers repeats their forward pass
    executed_per_gpu = (
        per_sample * batch_per_dp_rank * (1.0 + cfg.ckpt_fraction * FORWARD_SHARE)
        / (cfg.tp * cfg.cp * cfg.pp)
    )
    compute_s = executed_per_gpu / (cluster.peak_tflops_per_gpu * overlap.kernel_efficiency)

    per_microbatch = compute_s / m
    fwd_s = per_microbatch * FORWARD_SHARE
    bwd_s = per_microbatch - fwd_s
    schedule = simulate_pipeline(cfg.pp, cfg.vpp, m, fwd_s, bwd_s)

    comm = comm_volumes(model, cfg, cluster, bucket, bucket.tokens * microbatch_size, settings)
    exposed = m * (1.0 - overlap.tp_overlap_eff) * comm.time_of(
        "tp-allreduce", "tp-allgather-reducescatter"
    )
    exposed += m * comm.time_of("cp-all2all", "pp-p2p")

    allgather = comm.time_of("dp-allgather")
    reducescatter = comm.time_of("dp-reducescatter")
    if overlap.dp_overlap:
        # All-gather hides under the first microbatch forward, reduce-scatter under the last backward
        if not cfg.forward_hooks:
            allgather = max(0.0, allgather - fwd_s)
        reducescatter = max(0.0, reducescatter - bwd_s)
    exposed += allgather + reducescatter

    iteration_s = schedule.makespan_s + exposed
    return IterationEstimate(
        compute_s=compute_s,
        exposed_comm_s=exposed,
        bubble_fraction=schedule.bubble_fraction,
        iteration_s=iteration_s,
        mfu=mfu(useful, iteration_s, cluster),
        useful_tflops=useful,
        memory=memory,
        comm=comm,
    )
