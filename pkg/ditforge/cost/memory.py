"""Per-GPU memory model."""

import math

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ditforge.config.schema import EmulatorSettings
from ditforge.workload.types import ModelSpec, ParallelismConfig, ResolutionBucket

GB = 1e9


class MemoryReport(BaseModel):
    """Gigabytes resident per GPU."""

    model_config = ConfigDict(frozen=True)

    params_gb: float = Field(ge=0)
    grads_gb: float = Field(ge=0)
    optimizer_gb: float = Field(ge=0)
    activations_gb: float = Field(ge=0)
    total_gb: float = Field(ge=0)

    @model_validator(mode="after")
    def _total_is_sum(self) -> "MemoryReport":
        parts = self.params_gb + self.grads_gb + self.optimizer_gb + self.activations_gb
        if not math.isclose(self.total_gb, parts, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(f"total_gb {self.total_gb} != sum of parts {parts}")
        return self

    @classmethod
    def from_parts(
        cls, params_gb: float, grads_gb: float, optimizer_gb: float, activations_gb: float
    ) -> "MemoryReport":
        return cls(
            params_gb=params_gb,
            grads_gb=grads_gb,
            optimizer_gb=optimizer_gb,
            activations_gb=activations_gb,
            total_gb=params_gb + grads_gb + optimizer_gb + activations_gb,
        )


def activation_bytes_per_token(model: ModelSpec, settings: EmulatorSettings | None = None) -> float:
    """Default activation footprint of one token in one layer."""
    settings = settings or EmulatorSettings()
    return float(settings.activation_factor * model.hidden_dim)


def layers_resident(model: ModelSpec, cfg: ParallelismConfig) -> int:
    """Layer activations held by the first pipeline stage at the 1F1B peak."""
    per_stage = math.ceil(model.layers / cfg.pp)
    micro_batches = max(cfg.micro_batches, 1)
    if cfg.vpp > 1 and micro_batches % cfg.pp:
        # A single interleaved round finishes every forward before any backward
        return per_stage * micro_batches
    return per_stage * min(cfg.pp, micro_batches)


def memory_breakdown(
    model: ModelSpec,
    cfg: ParallelismConfig,
    bucket: ResolutionBucket,
    activation_bytes_per_token: float,
    ckpt_residual: float = 0.1,
    microbatch_size: float = 1.0,
) -> MemoryReport:
    """
    Split per-GPU memory into parameters, gradients, optimizer state and activations.

    Args:
        model: Model dimensions and byte costs.
        cfg: Sharding strategy.
        bucket: Resolution that sets tokens per sample.
        activation_bytes_per_token: Bytes one token keeps alive in one layer.
        ckpt_residual: Fraction of a checkpointed layer's activations still kept.
        microbatch_size: Samples per microbatch.
    """
    shard = cfg.tp * cfg.pp
    params = model.param_count * model.param_bytes / shard
    grads = model.param_count * model.grad_bytes / shard
    optimizer = model.param_count * model.optimizer_bytes / shard
    if cfg.zero1:
        optimizer /= cfg.dp

    tokens = bucket.tokens * microbatch_size
    divisor = (cfg.tp if cfg.sp else 1) * cfg.cp
    activations = tokens * layers_resident(model, cfg) * activation_bytes_per_token / divisor
    activations *= 1.0 - cfg.ckpt_fraction * (1.0 - ckpt_residual)

    return MemoryReport.from_parts(params / GB, grads / GB, optimizer / GB, activations / GB)


class ActivationCheck(BaseModel):
    """Modeled activation footprint against a reference figure."""
    modeled_gb: float
    reference_gb: float
    ratio: float
    within_tolerance: bool
    assumptions: list[str]


def activation_check(
    model: ModelSpec,
    cfg: ParallelismConfig,
    bucket: ResolutionBucket,
    settings: EmulatorSettings | None = None,
    reference_gb: float = 120.0,
    tolerance: float = 0.30,
) -> ActivationCheck:
    """Report how the activation model compares with a published total; never raises."""
    settings = settings or EmulatorSettings()
    per_token = activation_bytes_per_token(model, settings)
    report = memory_breakdown(model, cfg, bucket, per_token, settings.ckpt_residual)
    ratio = report.activations_gb / reference_gb
    return ActivationCheck(
        modeled_gb=report.activations_gb,
        reference_gb=reference_gb,
        ratio=ratio,
        within_tolerance=abs(ratio - 1.0) <= tolerance,
        assumptions=[
            f"activation bytes per token per layer = {settings.activation_factor} * hidden_dim",
            f"bucket {bucket.name} -> {bucket.tokens} latent tokens per sample, 1 sample per microbatch",
            f"tp={cfg.tp} sp={cfg.sp} cp={cfg.cp} pp={cfg.pp} ckpt_fraction={cfg.ckpt_fraction}",
        ],
    )
