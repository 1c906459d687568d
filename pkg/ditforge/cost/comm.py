"""Communication volumes per collective and the links they cross."""

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from ditforge.config.schema import EmulatorSettings
from ditforge.workload.types import (
    ClusterSpec,
    ModelSpec,
    ParallelismConfig,
    ResolutionBucket,
    SpecValidationError,
)

CommKind = Literal[
    "tp-allreduce",
    "tp-allgather-reducescatter",
    "cp-all2all",
    "pp-p2p",
    "dp-reducescatter",
    "dp-allgather",
    "vae-halo",
]
Link = Literal["intra", "inter"]


class CommEntry(BaseModel):
    """
    Bytes one rank moves for one collective kind.

    Entries scoped to "microbatch" recur once per microbatch; "iteration"
    entries happen once per optimizer step.
    """

    model_config = ConfigDict(frozen=True)

    kind: CommKind
    bytes: float = Field(ge=0)
    link: Link
    time_s: float = Field(ge=0)
    scope: Literal["microbatch", "iteration"] = "microbatch"
    block: str | None = None  # self-attention / cross-attention for CP entries


class CommReport(BaseModel):
    entries: list[CommEntry] = Field(default_factory=list)

    def time_of(self, *kinds: str) -> float:
        return sum(e.time_s for e in self.entries if e.kind in kinds)

    def bytes_of(self, *kinds: str) -> float:
        return sum(e.bytes for e in self.entries if e.kind in kinds)

    @property
    def total_bytes(self) -> float:
        return sum(e.bytes for e in self.entries)


def link_bandwidth(cluster: ClusterSpec, link: Link) -> float:
    """Bytes per second of the link class."""
    gbs = cluster.intra_node_bw if link == "intra" else cluster.inter_node_bw
    return gbs * 1e9


def group_link(span: int, cluster: ClusterSpec) -> Link:
    """A group is intra-node iff its ranks and all inner dimensions fit in one node."""
    return "intra" if span <= cluster.gpus_per_node else "inter"


def _entry(kind: CommKind, nbytes: float, link: Link, cluster: ClusterSpec, **extra) -> CommEntry:
    return CommEntry(
        kind=kind, bytes=nbytes, link=link, time_s=nbytes / link_bandwidth(cluster, link), **extra
    )


def tp_layer_bytes(activation_bytes: float, tp: int) -> float:
    """TP collective bytes for one layer: 2*(tp-1)/tp of the layer activation."""
    return 2.0 * (tp - 1) / tp * activation_bytes


def cp_block_bytes(activation_bytes: float, cp: int) -> float:
    """All-to-all bytes for one attention block split across cp ranks."""
    return activation_bytes * (cp - 1) / cp


def dp_collective_bytes(grad_bytes_per_rank: float, dp: int) -> float:
    """Bytes of one reduce-scatter or one all-gather over dp ranks."""
    return (dp - 1) / dp * grad_bytes_per_rank


def vae_halo_bytes(latent_frame_bytes: float, halo_frames: int) -> float:
    """Bytes per split boundary per direction."""
    return halo_frames * latent_frame_bytes


def comm_volumes(
    model: ModelSpec,
    cfg: ParallelismConfig,
    cluster: ClusterSpec,
    bucket: ResolutionBucket,
    microbatch_tokens: float,
    settings: EmulatorSettings | None = None,
) -> CommReport:
    """
    Communication of one pipeline stage rank.

    Rank order is tp innermost, then cp, pp and dp, so a dimension stays on
    NVLink while the product of its degree and every inner degree fits a node.
    Microbatch entries count forward and backward passes over the stage's layers.
    """
    settings = settings or EmulatorSettings()
    if cfg.tp > cluster.gpus_per_node:
        raise SpecValidationError(
            f"tp={cfg.tp} cannot stay inside a node of {cluster.gpus_per_node} GPUs"
        )

    dtype = settings.comm_dtype_bytes
    stage_layers = math.ceil(model.layers / cfg.pp)
    local_tokens = microbatch_tokens / cfg.cp
    layer_activation = local_tokens * model.hidden_dim * dtype
    passes = 2  # forward + backward
    entries: list[CommEntry] = []

    tp_kind: CommKind = "tp-allgather-reducescatter" if cfg.sp else "tp-allreduce"
    tp_bytes = tp_layer_bytes(layer_activation, cfg.tp) * stage_layers * passes
    entries.append(_entry(tp_kind, tp_bytes, group_link(cfg.tp, cluster), cluster))

    cp_link = group_link(cfg.tp * cfg.cp, cluster)
    self_bytes = cp_block_bytes(layer_activation, cfg.cp) * stage_layers * passes
    cross_bytes = self_bytes
    if cfg.cp_cross_attn_mode == "sequence-wise" and bucket.tokens:
        cross_bytes *= model.cross_attention_prompt_len / bucket.tokens
    entries.append(_entry("cp-all2all", self_bytes, cp_link, cluster, block="self-attention"))
    entries.append(_entry("cp-all2all", cross_bytes, cp_link, cluster, block="cross-attention"))

    pp_bytes = 0.0
    if cfg.pp > 1:
        boundary = layer_activation / (cfg.tp if cfg.sp else 1)
        pp_bytes = boundary * cfg.vpp * passes
    entries.append(_entry("pp-p2p", pp_bytes, group_link(cfg.tp * cfg.cp * cfg.pp, cluster), cluster))

    grad_bytes = model.param_count * model.grad_bytes / (cfg.tp * cfg.pp)
    dp_link = group_link(cfg.world_size, cluster)
    dp_bytes = dp_collective_bytes(grad_bytes, cfg.dp)
    entries.append(_entry("dp-reducescatter", dp_bytes, dp_link, cluster, scope="iteration"))
    entries.append(_entry("dp-allgather", dp_bytes, dp_link, cluster, scope="iteration"))

    return CommReport(entries=entries)


class HaloReport(BaseModel):
    """Cost of exchanging overlap frames between temporal VAE shards."""
    bucket: str
    split: int
    boundaries: int
    bytes_per_boundary: float
    entry: CommEntry
    halo_time_s: float
    conv_time_s: float
    ratio: float
    assumptions: list[str]


def vae_halo(
    bucket: ResolutionBucket,
    cluster: ClusterSpec,
    settings: EmulatorSettings | None = None,
    split: int | None = None,
) -> HaloReport:
    """Model halo-exchange time against convolution compute for a temporal VAE split."""
    settings = settings or EmulatorSettings()
    split = split or settings.vae_split
    if split < 2:
        raise SpecValidationError(f"temporal split must be >= 2, got {split}")
    if split > bucket.frames:
        raise SpecValidationError(f"cannot split {bucket.frames} frames {split} ways")

    frame_bytes = (
        bucket.latent_height * bucket.latent_width * settings.vae_halo_channels
        * settings.comm_dtype_bytes
    )
    per_boundary = vae_halo_bytes(frame_bytes, settings.vae_halo_frames)
    link = group_link(split, cluster)
    boundaries = split - 1
    # Every boundary carries a halo each way; the exchanges share one link
    entry = _entry("vae-halo", boundaries * 2 * per_boundary, link, cluster, scope="iteration")

    frames_per_shard = math.ceil(bucket.frames / split)
    conv_flops = settings.vae_flops_per_pixel * frames_per_shard * bucket.height * bucket.width
    conv_time = conv_flops / (cluster.peak_tflops_per_gpu * 1e12 * settings.kernel_efficiency)

    return HaloReport(
        bucket=bucket.name,
        split=split,
        boundaries=boundaries,
        bytes_per_boundary=per_boundary,
        entry=entry,
        halo_time_s=entry.time_s,
        conv_time_s=conv_time,
        ratio=entry.time_s / conv_time,
        assumptions=[
            f"halo of {settings.vae_halo_frames} frame(s) of "
            f"{bucket.latent_height}x{bucket.latent_width}x{settings.vae_halo_channels} "
            f"features at {settings.comm_dtype_bytes} bytes",
            f"conv cost {settings.vae_flops_per_pixel:.3g} FLOPs per output pixel",
            f"kernel efficiency {settings.kernel_efficiency}",
            f"{split}-way temporal split: {boundaries} boundaries, each exchanged in both directions, "
            f"serialised on the {link}-node link",
        ],
    )
