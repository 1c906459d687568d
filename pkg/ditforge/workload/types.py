"""Workload, hardware and sharding descriptions."""

from typing import Literal

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator

from ditforge.errors import DitforgeError

CpMode = Literal["head-wise", "sequence-wise"]

# Pixel area the FLOPs table's coefficients are expressed against
REFERENCE_PIXELS = 256 * 256


class NoBucketError(DitforgeError):
    """Raised when a frame count has no configured bucket."""


class SpecValidationError(DitforgeError):
    """Raised when a workload document or shape request is inconsistent."""


class ModelSpec(BaseModel):
    """DiT dimensions and per-parameter byte costs."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    layers: PositiveInt
    hidden_dim: PositiveInt
    attention_heads: PositiveInt
    mlp_ratio: PositiveFloat = 4.0
    cross_attention_prompt_len: PositiveInt = 320
    param_count: PositiveFloat
    param_bytes: PositiveFloat = 2.0
    grad_bytes: PositiveFloat = 4.0
    optimizer_bytes: PositiveFloat = 12.0

    @model_validator(mode="after")
    def _heads_divide_hidden(self) -> "ModelSpec":
        if self.hidden_dim % self.attention_heads:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by attention_heads {self.attention_heads}"
            )
        return self

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.attention_heads


class ClusterSpec(BaseModel):
    """Hardware description of the training cluster."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    nodes: PositiveInt
    gpus_per_node: PositiveInt
    peak_tflops_per_gpu: PositiveFloat  # TFLOP/s
    hbm_gb: PositiveFloat
    intra_node_bw: PositiveFloat  # GB/s, NVLink-class
    inter_node_bw: PositiveFloat  # GB/s per node, NIC-class

    @model_validator(mode="after")
    def _warn_bandwidth_inversion(self) -> "ClusterSpec":
        if self.intra_node_bw < self.inter_node_bw:
            logger.warning(
                f"intra_node_bw {self.intra_node_bw} GB/s is below inter_node_bw "
                f"{self.inter_node_bw} GB/s"
            )
        return self

    @classmethod
    def reference(cls, nodes: int = 1) -> "ClusterSpec":
        """H800-class nodes: 8 GPUs on NVLink, RoCE NICs between nodes."""
        return cls(
            nodes=nodes,
            gpus_per_node=8,
            peak_tflops_per_gpu=989.0,
            hbm_gb=80.0,
            intra_node_bw=400.0,
            inter_node_bw=100.0,
        )

    @property
    def total_gpus(self) -> int:
        return self.nodes * self.gpus_per_node

    @property
    def peak_tflops(self) -> float:
        return self.total_gpus * self.peak_tflops_per_gpu


class ParallelismConfig(BaseModel):
    """
    One sharding strategy.

    Cross-field rules (degree product, vpp/pp pairing, ranges) are checked by
    validate_config so each violation can be reported by name.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    tp: PositiveInt = 1
    sp: bool = False
    cp: PositiveInt = 1
    cp_self_attn_mode: CpMode = "head-wise"
    cp_cross_attn_mode: CpMode = "head-wise"
    pp: PositiveInt = 1
    vpp: int = 1
    dp: PositiveInt = 1
    zero1: bool = False
    micro_batches: int = 1
    ckpt_fraction: float = 0.0
    forward_hooks: bool = False  # Forward hooks block overlap of the DP parameter all-gather

    @property
    def world_size(self) -> int:
        return self.tp * self.cp * self.pp * self.dp

    def key(self) -> tuple:
        """Total order used to break MFU ties deterministically."""
        return (
            self.tp,
            int(self.sp),
            self.cp,
            self.cp_self_attn_mode,
            self.cp_cross_attn_mode,
            self.pp,
            self.vpp,
            self.dp,
            int(self.zero1),
            self.micro_batches,
            self.ckpt_fraction,
            int(self.forward_hooks),
        )

    def label(self) -> str:
        parts = [f"tp{self.tp}"]
        if self.sp:
            parts.append("sp")
        if self.cp > 1:
            parts.append(f"cp{self.cp}[{self.cp_self_attn_mode[0]}/{self.cp_cross_attn_mode[0]}]")
        if self.pp > 1:
            parts.append(f"pp{self.pp}")
        if self.vpp > 1:
            parts.append(f"vpp{self.vpp}")
        parts.append(f"dp{self.dp}")
        if self.zero1:
            parts.append("zero1")
        parts.append(f"m{self.micro_batches}")
        if self.ckpt_fraction:
            parts.append(f"ckpt{self.ckpt_fraction:g}")
        return "-".join(parts)


class ResolutionBucket(BaseModel):
    """A frame/pixel bucket and its latent token grid."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    frames: PositiveInt
    height: PositiveInt
    width: PositiveInt
    latent_frames: PositiveInt
    latent_height: PositiveInt
    latent_width: PositiveInt

    @model_validator(mode="after")
    def _latent_within_frames(self) -> "ResolutionBucket":
        if self.latent_frames > self.frames:
            raise ValueError(
                f"latent_frames {self.latent_frames} exceeds frames {self.frames}"
            )
        return self

    @property
    def tokens(self) -> int:
        return self.latent_frames * self.latent_height * self.latent_width

    @property
    def pixel_ratio(self) -> float:
        return self.height * self.width / REFERENCE_PIXELS

    @property
    def name(self) -> str:
        return f"{self.frames}x{self.height}x{self.width}"


class ValidationDiagnostic(BaseModel):
    """One violated invariant."""
    name: str
    detail: str


class ValidationReport(BaseModel):
    """Outcome of validate_config; empty iff the config is usable."""
    diagnostics: list[ValidationDiagnostic] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.diagnostics

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.diagnostics]

    def summary(self) -> str:
        return "; ".join(f"{d.name}: {d.detail}" for d in self.diagnostics)

    def raise_for_errors(self) -> None:
        if self.diagnostics:
            raise SpecValidationError(self.summary())
