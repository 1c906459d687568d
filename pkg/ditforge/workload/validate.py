"""Cross-field checks for parallelism configs."""

from ditforge.workload.types import (
    ClusterSpec,
    ParallelismConfig,
    ValidationDiagnostic,
    ValidationReport,
)


def validate_config(cfg: ParallelismConfig, cluster: ClusterSpec) -> ValidationReport:
    """Return one named diagnostic per violated invariant; empty when usable."""
    found: list[ValidationDiagnostic] = []

    def add(name: str, detail: str) -> None:
        found.append(ValidationDiagnostic(name=name, detail=detail))

    if cfg.world_size != cluster.total_gpus:
        add(
            "degree product mismatch",
            f"tp*cp*pp*dp = {cfg.world_size} but cluster has {cluster.total_gpus} GPUs",
        )
    if cfg.tp > cluster.gpus_per_node:
        add("tp exceeds gpus_per_node", f"tp={cfg.tp} > gpus_per_node={cluster.gpus_per_node}")
    if cfg.vpp < 1:
        add("vpp below one", f"vpp={cfg.vpp}")
    elif cfg.vpp > 1 and cfg.pp == 1:
        add("vpp requires pp", f"vpp={cfg.vpp} with pp=1")
    if cfg.micro_batches < 1:
        add("micro_batches below one", f"micro_batches={cfg.micro_batches}")
    if not 0.0 <= cfg.ckpt_fraction <= 1.0:
        add("ckpt_fraction out of range", f"ckpt_fraction={cfg.ckpt_fraction}")

    return ValidationReport(diagnostics=found)
