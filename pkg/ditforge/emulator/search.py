"""Exhaustive search over parallelism configs."""

from concurrent.futures import ThreadPoolExecutor
from itertools import product
from typing import Any, Iterator

from loguru import logger
from pydantic import BaseModel, Field

from ditforge.config.schema import EmulatorSettings
from ditforge.cost.flops import CostCoefficients
from ditforge.emulator.estimate import (
    InfeasibleConfigError,
    IterationEstimate,
    OverlapModel,
    estimate_iteration,
)
from ditforge.errors import DitforgeError
from ditforge.workload.types import (
    ClusterSpec,
    CpMode,
    ModelSpec,
    ParallelismConfig,
    ResolutionBucket,
    SpecValidationError,
)

_PIN_FIELDS = set(ParallelismConfig.model_fields)
_BOOL_FIELDS = {"sp", "zero1", "forward_hooks"}


class SearchSpace(BaseModel):
    """Enumeration bounds; dp follows from the cluster size."""
    tp: list[int] = Field(default_factory=lambda: [1, 2, 4, 8])
    cp: list[int] = Field(default_factory=lambda: [1, 2, 4])
    pp: list[int] = Field(default_factory=lambda: [1, 2, 4])
    vpp: list[int] = Field(default_factory=lambda: [1, 2])
    sp: list[bool] = Field(default_factory=lambda: [False, True])
    zero1: list[bool] = Field(default_factory=lambda: [False, True])
    cp_self_attn_modes: list[CpMode] = Field(default_factory=lambda: ["head-wise"])
    cp_cross_attn_modes: list[CpMode] = Field(default_factory=lambda: ["head-wise", "sequence-wise"])
    micro_batches: list[int] = Field(default_factory=lambda: [8])
    ckpt_fractions: list[float] = Field(default_factory=lambda: [0.0, 1.0])
    forward_hooks: list[bool] = Field(default_factory=lambda: [False])
    global_batch: int | None = None  # When set, micro_batches = global_batch / dp

    def configs(self, model: ModelSpec, cluster: ClusterSpec) -> Iterator[ParallelismConfig]:
        """Divisor-consistent configs, each exactly once."""
        total = cluster.total_gpus
        seen: set[tuple] = set()
        for tp, cp, pp, vpp in product(self.tp, self.cp, self.pp, self.vpp):
            shard = tp * cp * pp
            if total % shard or pp * vpp > model.layers or (vpp > 1 and pp == 1):
                continue
            dp = total // shard
            if self.global_batch is not None:
                if self.global_batch % dp:
                    continue
                batch_options = [self.global_batch // dp]
            else:
                batch_options = self.micro_batches
            cp_modes = (
                product(self.cp_self_attn_modes, self.cp_cross_attn_modes)
                if cp > 1
                else [("head-wise", "head-wise")]
            )
            for (self_mode, cross_mode), sp, zero1, m, ckpt, hooks in product(
                list(cp_modes),
                self.sp if tp > 1 else [False],
                self.zero1 if dp > 1 else [False],
                batch_options,
                self.ckpt_fractions,
                self.forward_hooks,
            ):
                cfg = ParallelismConfig(
                    tp=tp,
                    sp=sp,
                    cp=cp,
                    cp_self_attn_mode=self_mode,
                    cp_cross_attn_mode=cross_mode,
                    pp=pp,
                    vpp=vpp,
                    dp=dp,
                    zero1=zero1,
                    micro_batches=m,
                    ckpt_fraction=ckpt,
                    forward_hooks=hooks,
                )
                if cfg.key() not in seen:
                    seen.add(cfg.key())
                    yield cfg


class RankedEntry(BaseModel):
    config: ParallelismConfig
    estimate: IterationEstimate


class InfeasibleEntry(BaseModel):
    config: ParallelismConfig
    reason: str


class PinnedGap(BaseModel):
    """MFU of the best config matching a user pin, relative to the overall best."""
    pin: dict[str, Any]
    config: ParallelismConfig | None = None
    mfu: float | None = None
    best_mfu: float | None = None
    gap: float | None = None  # pinned - best; <= 0
    reason: str | None = None


class SearchReport(BaseModel):
    bucket: str
    entries: list[RankedEntry] = Field(default_factory=list)
    infeasible: list[InfeasibleEntry] = Field(default_factory=list)
    pinned: PinnedGap | None = None
    reference_mfu: float | None = None

    @property
    def best(self) -> RankedEntry | None:
        return self.entries[0] if self.entries else None


def parse_pin(text: str) -> dict[str, Any]:
    """Parse "tp=8,sp=1,zero1=1" into config field values."""
    pin: dict[str, Any] = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        name, sep, raw = part.partition("=")
        name = name.strip()
        if not sep or name not in _PIN_FIELDS:
            raise SpecValidationError(f"bad pin component {part!r}")
        raw = raw.strip()
        if name in _BOOL_FIELDS:
            pin[name] = raw.lower() in {"1", "true", "yes", "on"}
        elif name in {"cp_self_attn_mode", "cp_cross_attn_mode"}:
            pin[name] = raw
        elif name == "ckpt_fraction":
            pin[name] = float(raw)
        else:
            try:
                pin[name] = int(raw)
            except ValueError as e:
                raise SpecValidationError(f"bad pin value {part!r}") from e
    return pin


def _matches(cfg: ParallelismConfig, pin: dict[str, Any]) -> bool:
    return all(getattr(cfg, name) == value for name, value in pin.items())


def _evaluate(
    cfg: ParallelismConfig,
    model: ModelSpec,
    cluster: ClusterSpec,
    bucket: ResolutionBucket,
    overlap: OverlapModel,
    coeffs: CostCoefficients | None,
    settings: EmulatorSettings,
) -> RankedEntry | InfeasibleEntry:
    try:
        estimate = estimate_iteration(
            model, cfg, cluster, bucket, cfg.micro_batches, overlap, coeffs, settings
        )
    except InfeasibleConfigError as e:
        return InfeasibleEntry(config=cfg, reason=str(e))
    except DitforgeError as e:
        return InfeasibleEntry(config=cfg, reason=f"invalid: {e}")
    return RankedEntry(config=cfg, estimate=estimate)


def search_configs(
    model: ModelSpec,
    cluster: ClusterSpec,
    bucket: ResolutionBucket,
    space: SearchSpace | list[ParallelismConfig],
    pin: dict[str, Any] | None = None,
    overlap: OverlapModel | None = None,
    coeffs: CostCoefficients | None = None,
    settings: EmulatorSettings | None = None,
) -> SearchReport:
    """
    Estimate every config of the space on a thread pool and rank by MFU.

    Each microbatch carries one sample, so batch_per_dp_rank equals micro_batches.
    Ties in MFU are broken by ParallelismConfig.key so reruns are identical.
    """
    settings = settings or EmulatorSettings()
    overlap = overlap or OverlapModel.from_settings(settings)
    configs = list(space) if isinstance(space, list) else list(space.configs(model, cluster))
    if not configs:
        raise SpecValidationError("search space is empty")

    logger.info(f"Evaluating {len(configs)} configs for {bucket.name}")
    with ThreadPoolExecutor(max_workers=max(1, settings.workers)) as pool:
        results = list(
            pool.map(
                lambda c: _evaluate(c, model, cluster, bucket, overlap, coeffs, settings), configs
            )
        )

    entries = sorted(
        (r for r in results if isinstance(r, RankedEntry)),
        key=lambda r: (-r.estimate.mfu, r.config.key()),
    )
    infeasible = sorted(
        (r for r in results if isinstance(r, InfeasibleEntry)), key=lambda r: r.config.key()
    )
    report = SearchReport(
        bucket=bucket.name,
        entries=entries,
        infeasible=infeasible,
        reference_mfu=settings.reference_mfu,
    )
    if pin:
        report.pinned = _pinned_gap(report, pin)
    return report


def _pinned_gap(report: SearchReport, pin: dict[str, Any]) -> PinnedGap:
    best = report.best
    match = next((e for e in report.entries if _matches(e.config, pin)), None)
    if best is None or match is None:
        return PinnedGap(pin=pin, reason="no feasible config matches the pin")
    return PinnedGap(
        pin=pin,
        config=match.config,
        mfu=match.estimate.mfu,
        best_mfu=best.estimate.mfu,
        gap=match.estimate.mfu - best.estimate.mfu,
    )
