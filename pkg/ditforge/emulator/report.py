"""Terminal rendering of emulator results."""

from rich.table import Table

from ditforge.cost.comm import HaloReport
from ditforge.emulator.estimate import IterationEstimate
from ditforge.emulator.search import SearchReport


def render_search_table(report: SearchReport, limit: int = 20) -> Table:
    """Config rows by MFU column, best first, with the realized reference line."""
    table = Table(title=f"MFU by parallelism config ({report.bucket})")
    table.add_column("#", justify="right", style="dim")
    table.add_column("Config", style="cyan")
    table.add_column("MFU", justify="right", style="green")
    table.add_column("Iter (s)", justify="right")
    table.add_column("Bubble", justify="right")
    table.add_column("Exposed comm (s)", justify="right")
    table.add_column("Mem (GB)", justify="right")

    for rank, entry in enumerate(report.entries[:limit], start=1):
        est = entry.estimate
        table.add_row(
            str(rank),
            entry.config.label(),
            f"{est.mfu:.2%}",
            f"{est.iteration_s:.3f}",
            f"{est.bubble_fraction:.1%}",
            f"{est.exposed_comm_s:.3f}",
            f"{est.memory.total_gb:.1f}",
        )

    if report.reference_mfu is not None:
        table.add_section()
        table.add_row("", "[dim]realized at 540P (reference)[/dim]", f"{report.reference_mfu:.0%}", "", "", "", "")
    if report.pinned is not None and report.pinned.gap is not None:
        table.add_row(
            "",
            f"[yellow]pinned {report.pinned.config.label()}[/yellow]",
            f"{report.pinned.mfu:.2%}",
            f"{report.pinned.gap:+.2%}",
            "",
            "",
            "",
        )
    table.caption = f"{len(report.entries)} feasible, {len(report.infeasible)} infeasible"
    return table


def render_estimate(estimate: IterationEstimate) -> Table:
    table = Table(title="Iteration estimate", show_header=False)
    table.add_column("Field", style="cyan")
    table.add_column("Value", justify="right")
    table.add_row("compute (s)", f"{estimate.compute_s:.4f}")
    table.add_row("exposed comm (s)", f"{estimate.exposed_comm_s:.4f}")
    table.add_row("bubble", f"{estimate.bubble_fraction:.2%}")
    table.add_row("iteration (s)", f"{estimate.iteration_s:.4f}")
    table.add_row("MFU", f"{estimate.mfu:.2%}")
    table.add_row("memory (GB)", f"{estimate.memory.total_gb:.2f}")
    return table


def render_halo(report: HaloReport) -> Table:
    table = Table(title=f"VAE halo exchange ({report.bucket}, {report.split}-way)", show_header=False)
    table.add_column("Field", style="cyan")
    table.add_column("Value", justify="right")
    table.add_row("bytes per boundary", f"{report.bytes_per_boundary:,.0f}")
    table.add_row("halo time (s)", f"{report.halo_time_s:.3e}")
    table.add_row("conv time (s)", f"{report.conv_time_s:.3e}")
    table.add_row("ratio", f"{report.ratio:.4%}")
    for line in report.assumptions:
        table.add_row("assumption", line)
    return table
