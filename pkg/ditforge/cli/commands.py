"""CLI commands for ditforge."""

import asyncio
import sys
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path
from typing import Iterator

import typer
from loguru import logger
from rich.console import Console
from rich.table import Table

from ditforge import __logo__, __version__
from ditforge.config.loader import load_config
from ditforge.config.schema import Settings
from ditforge.errors import DitforgeError

app = typer.Typer(
    name="ditforge",
    help=f"{__logo__} ditforge - video DiT training infrastructure at desk scale",
    no_args_is_help=True,
)

console = Console()
err_console = Console(stderr=True)


def version_callback(value: bool):
    if value:
        console.print(f"{__logo__} ditforge v{__version__}")
        raise typer.Exit()


def _configure_logging(level: str) -> None:
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format="{time:HH:mm:ss} | {level: <7} | {message}")


@app.callback()
def main(
    ctx: typer.Context,
    version: bool = typer.Option(
        None, "--version", "-v", callback=version_callback, is_eager=True
    ),
    config: Path = typer.Option(None, "--config", help="Config file (default ~/.ditforge/config.json)"),
):
    """ditforge - emulator, load balancer, data plane and telemetry for video DiT training."""
    settings = load_config(config)
    _configure_logging(settings.log)
    ctx.obj = settings


def _settings(ctx: typer.Context) -> Settings:
    return ctx.obj if isinstance(ctx.obj, Settings) else load_config()


@contextmanager
def _domain_errors() -> Iterator[None]:
    """Report domain failures on stderr and exit 1."""
    try:
        yield
    except DitforgeError as e:
        err_console.print(f"[red]Error:[/red] {e}")
        raise typer.Exit(1)


def _emit(data, out: Path | None) -> None:
    from ditforge.utils.helpers import write_output

    text = write_output(data, out)
    if out is None:
        typer.echo(text)
    else:
        err_console.print(f"[green]✓[/green] Wrote {out}")


# ============================================================================
# Cost model
# ============================================================================


@app.command()
def calibrate(
    table: Path = typer.Option(None, "--table", "-t", help="FLOPs table JSON (default: bundled reference)"),
    out: Path = typer.Option(None, "--out", "-o", help="Write JSON here instead of stdout"),
    text: bool = typer.Option(False, "--text", help="Render a table instead of JSON"),
):
    """Fit the FLOPs-per-sample model to a table and print residuals."""
    from ditforge.cost.flops import FlopsTable, calibrate as fit, reference_table

    with _domain_errors():
        flops = FlopsTable.load(table) if table else reference_table()
        result = fit(flops)

    if not text:
        _emit(result, out)
        return

    coeffs = result.coefficients
    console.print(
        f"k={coeffs.latent_multiplier_k} c={coeffs.constant_c:.4f} a={coeffs.linear_a:.4f} "
        f"b={coeffs.quad_b:.6f} max residual {result.max_residual:.3%}"
    )
    grid = Table(title="Calibration residuals")
    grid.add_column("Bucket", style="cyan")
    grid.add_column("TFLOPs", justify="right")
    grid.add_column("Predicted", justify="right")
    grid.add_column("Error", justify="right")
    for row in result.residuals:
        grid.add_row(
            f"{row.frames}x{row.height}x{row.width}",
            f"{row.tflops:.2f}",
            f"{row.predicted:.2f}",
            f"{row.rel_error:+.3%}",
        )
    console.print(grid)


# ============================================================================
# Load balancing
# ============================================================================


@app.command()
def plan(
    ctx: typer.Context,
    manifest: Path = typer.Option(..., "--manifest", "-m", help="Clip manifest (JSONL)"),
    target: str = typer.Option(None, "--target", help="Target bucket FRAMESxHEIGHTxWIDTH (default: costliest row)"),
    alpha: float = typer.Option(None, "--alpha", help="Coarse scaling factor"),
    beta: float = typer.Option(None, "--beta", help="Image padding ratio"),
    cache: int = typer.Option(None, "--cache", help="Video batches held before padding"),
    flops_table: Path = typer.Option(None, "--flops-table", help="FLOPs table JSON (default: bundled reference)"),
    out: Path = typer.Option(None, "--out", "-o", help="Write the plan here instead of stdout"),
    text: bool = typer.Option(False, "--text", help="Render a summary table"),
):
    """Turn a clip manifest into FLOPs-balanced batches."""
    from ditforge.balance.planner import balancer_config, plan_clips, read_manifest
    from ditforge.cost.flops import FlopsTable, reference_table
    from ditforge.utils.helpers import parse_bucket

    settings = _settings(ctx).balancer
    with _domain_errors():
        table = FlopsTable.load(flops_table) if flops_table else reference_table()
        target_key = parse_bucket(target) if target else None
        config = balancer_config(
            table,
            target_key,
            alpha=settings.alpha if alpha is None else alpha,
            beta=settings.beta if beta is None else beta,
            cache_n=settings.cache_n if cache is None else cache,
        )
        clips = read_manifest(manifest)
        result = plan_clips(
            clips,
            table,
            target_key,
            config,
            frame_buckets=settings.frame_buckets,
            aspect_ratios=settings.aspect_ratios,
        )

    if not text:
        _emit(result, out)
        return

    grid = Table(title=f"Batch sizes (alpha={config.alpha:g}, target {config.f_target:.2f} TFLOPs)")
    grid.add_column("Bucket", style="cyan")
    grid.add_column("TFLOPs/sample", justify="right")
    grid.add_column("Batch", justify="right")
    grid.add_column("Batch TFLOPs", justify="right")
    for row in result.per_resolution:
        grid.add_row(row.bucket, f"{row.tflops:.2f}", str(row.batch_size), f"{row.batch_flops:.2f}")
    console.print(grid)
    finals = [b.final_flops for b in result.padded_batches]
    if finals:
        console.print(
            f"{len(finals)} batches, max {max(finals):.2f} / min {min(finals):.2f} TFLOPs, "
            f"{len(result.leftover_videos)} leftover clips, {len(result.unused_images)} unused images"
        )


# ============================================================================
# Emulator
# ============================================================================


emu_app = typer.Typer(help="Estimate and search parallelism configs")
app.add_typer(emu_app, name="emu")


def _load_workload(model: Path, cluster: Path | None, bucket: str, ctx: typer.Context):
    from ditforge.workload.loader import load_cluster_spec, load_model_spec
    from ditforge.workload.shapes import bucket_from_string
    from ditforge.workload.types import ClusterSpec

    emulator = _settings(ctx).emulator
    return (
        load_model_spec(model),
        load_cluster_spec(cluster) if cluster else ClusterSpec.reference(),
        bucket_from_string(bucket, emulator.latent_table, emulator.patch),
    )


@emu_app.command("sweep")
def emu_sweep(
    ctx: typer.Context,
    model: Path = typer.Option(..., "--model", help="Model spec JSON"),
    cluster: Path = typer.Option(None, "--cluster", help="Cluster spec JSON (default: one 8-GPU node)"),
    bucket: str = typer.Option(..., "--bucket", help="FRAMESxHEIGHTxWIDTH"),
    pin: str = typer.Option(None, "--pin", help="Report the gap of configs matching e.g. tp=8,sp=1"),
    global_batch: int = typer.Option(None, "--global-batch", help="Fix samples per iteration"),
    out: Path = typer.Option(None, "--out", "-o", help="Write the report here instead of stdout"),
    text: bool = typer.Option(False, "--text", help="Render the ranking as a table"),
    limit: int = typer.Option(20, "--limit", help="Rows shown with --text"),
):
    """Rank every feasible config of the search space by MFU."""
    from ditforge.emulator.report import render_search_table
    from ditforge.emulator.search import SearchSpace, parse_pin, search_configs

    settings = _settings(ctx).emulator
    with _domain_errors():
        model_spec, cluster_spec, res = _load_workload(model, cluster, bucket, ctx)
        report = search_configs(
            model_spec,
            cluster_spec,
            res,
            SearchSpace(global_batch=global_batch),
            pin=parse_pin(pin) if pin else None,
            settings=settings,
        )

    if text:
        console.print(render_search_table(report, limit))
        for entry in report.infeasible[:limit]:
            console.print(f"[dim]{entry.config.label()}: {entry.reason}[/dim]")
    else:
        _emit(report, out)


@emu_app.command("estimate")
def emu_estimate(
    ctx: typer.Context,
    model: Path = typer.Option(..., "--model", help="Model spec JSON"),
    parallel: Path = typer.Option(..., "--parallel", help="Parallelism config JSON"),
    bucket: str = typer.Option(..., "--bucket", help="FRAMESxHEIGHTxWIDTH"),
    cluster: Path = typer.Option(None, "--cluster", help="Cluster spec JSON (default: one 8-GPU node)"),
    batch: int = typer.Option(None, "--batch", help="Samples per DP rank (default: micro_batches)"),
    out: Path = typer.Option(None, "--out", "-o"),
    text: bool = typer.Option(False, "--text"),
):
    """Estimate one config's iteration time, MFU and memory."""
    from ditforge.emulator.estimate import estimate_iteration
    from ditforge.emulator.report import render_estimate
    from ditforge.workload.loader import load_parallelism

    settings = _settings(ctx).emulator
    with _domain_errors():
        model_spec, cluster_spec, res = _load_workload(model, cluster, bucket, ctx)
        cfg = load_parallelism(parallel)
        estimate = estimate_iteration(
            model_spec, cfg, cluster_spec, res, batch or cfg.micro_batches, settings=settings
        )

    if text:
        console.print(render_estimate(estimate))
    else:
        _emit(estimate, out)


@emu_app.command("halo")
def emu_halo(
    ctx: typer.Context,
    bucket: str = typer.Option(..., "--bucket", help="FRAMESxHEIGHTxWIDTH"),
    cluster: Path = typer.Option(None, "--cluster", help="Cluster spec JSON (default: one 8-GPU node)"),
    split: int = typer.Option(None, "--split", help="Temporal VAE shards"),
    out: Path = typer.Option(None, "--out", "-o"),
    text: bool = typer.Option(False, "--text"),
):
    """Compare VAE halo-exchange time with convolution compute."""
    from ditforge.cost.comm import vae_halo
    from ditforge.emulator.report import render_halo
    from ditforge.workload.loader import load_cluster_spec
    from ditforge.workload.shapes import bucket_from_string
    from ditforge.workload.types import ClusterSpec

    settings = _settings(ctx).emulator
    with _domain_errors():
        res = bucket_from_string(bucket, settings.latent_table, settings.patch)
        cluster_spec = load_cluster_spec(cluster) if cluster else ClusterSpec.reference()
        report = vae_halo(res, cluster_spec, settings, split)

    if text:
        console.print(render_halo(report))
    else:
        _emit(report, out)


# ============================================================================
# Data plane
# ============================================================================


pipe_app = typer.Typer(help="Stream frames over named pipes")
app.add_typer(pipe_app, name="pipe")


@pipe_app.command("produce")
def pipe_produce(
    ctx: typer.Context,
    peers: Path = typer.Option(..., "--peers", help="Peers file JSON"),
    pipe: str = typer.Option("latents", "--pipe", help="Pipe name"),
    rate: str = typer.Option(None, "--rate", help="Frames per time unit, e.g. 100/s"),
    size: str = typer.Option("4MiB", "--size", help="Payload bytes per frame"),
    count: int = typer.Option(100, "--count", "-n", help="Frames to send"),
    seed: int = typer.Option(0, "--seed", help="Payload RNG seed"),
    out: Path = typer.Option(None, "--out", "-o"),
):
    """Serve a pipe and stream frames to the consumers in the peers file."""
    from ditforge.rpc.peers import PeersFile
    from ditforge.rpc.runners import run_producer
    from ditforge.utils.helpers import parse_rate, parse_size

    settings = _settings(ctx).rpc
    with _domain_errors():
        spec = PeersFile.load(peers)
        report = asyncio.run(
            run_producer(
                spec,
                pipe,
                count,
                parse_size(size),
                parse_rate(rate) if rate else None,
                seed,
                settings,
            )
        )
    _emit(report, out)


@pipe_app.command("consume")
def pipe_consume(
    ctx: typer.Context,
    peers: Path = typer.Option(..., "--peers", help="Peers file JSON"),
    pipe: str = typer.Option("latents", "--pipe", help="Pipe name"),
    job: str = typer.Option(..., "--job", help="Job id of this consumer"),
    endpoint: str = typer.Option(None, "--endpoint", help="Consumer name within the job"),
    out: Path = typer.Option(None, "--out", "-o"),
):
    """Read a pipe from every producer until each stream ends."""
    from ditforge.rpc.peers import PeersFile
    from ditforge.rpc.runners import run_consumer

    settings = _settings(ctx).rpc
    with _domain_errors():
        spec = PeersFile.load(peers)
        streams = asyncio.run(run_consumer(spec, pipe, job, endpoint, settings))
    _emit([s.model_dump() for s in streams], out)


@pipe_app.command("demo")
def pipe_demo(
    ctx: typer.Context,
    frames: int = typer.Option(100, "--frames", "-n", help="Frames to stream"),
    jobs: int = typer.Option(2, "--jobs", help="Consumer jobs"),
    consumers: int = typer.Option(3, "--consumers", help="Consumers per job"),
    mode: str = typer.Option("broadcast", "--mode", help="broadcast or spray"),
    size: str = typer.Option("1KiB", "--size", help="Payload bytes per frame"),
    seed: int = typer.Option(0, "--seed", help="Seed for payloads and the leaving consumer"),
    leave_after: int = typer.Option(None, "--leave-after", help="One consumer leaves after N frames"),
    out: Path = typer.Option(None, "--out", "-o"),
    text: bool = typer.Option(False, "--text", help="Render delivery counts"),
):
    """In-process producer and consumer jobs on one pipe; prints pipe metrics."""
    from ditforge.rpc.runners import run_demo
    from ditforge.utils.helpers import parse_size

    if mode not in {"broadcast", "spray"}:
        err_console.print(f"[red]Error:[/red] unknown mode {mode!r}")
        raise typer.Exit(2)

    settings = _settings(ctx).rpc
    with _domain_errors():
        report = asyncio.run(
            run_demo(frames, jobs, consumers, mode, parse_size(size), seed, leave_after, settings)
        )

    if not text:
        _emit(report, out)
        return

    grid = Table(title=f"{report.mode} pipe {report.pipe}: {report.frames} frames")
    grid.add_column("Job", style="cyan")
    grid.add_column("Consumer")
    grid.add_column("Frames", justify="right")
    for job_id, counts in report.delivered().items():
        for endpoint, n in counts.items():
            label = f"{endpoint} [yellow](left)[/yellow]" if endpoint == report.left else endpoint
            grid.add_row(job_id, label, str(n))
    console.print(grid)
    m = report.metrics
    console.print(
        f"produced {m.produced} consumed {m.consumed} dropped {m.dropped} "
        f"mean queue latency {m.queue_latency_ns.mean_ns / 1e3:.1f} us"
    )


@pipe_app.command("bench")
def pipe_bench(
    size: str = typer.Option("64MiB", "--size", help="Payload bytes"),
    chunk: str = typer.Option("4MiB", "--chunk", help="Chunk bytes"),
    measure: bool = typer.Option(False, "--measure", help="Also time a loopback transfer"),
    out: Path = typer.Option(None, "--out", "-o"),
):
    """Compare chunked pipelined transfer with store-and-forward."""
    from ditforge.rpc.transfer import measure_loopback, pipelined_transfer
    from ditforge.utils.helpers import parse_size

    with _domain_errors():
        payload, chunk_bytes = parse_size(size), parse_size(chunk)
        modelled = pipelined_transfer(payload, chunk_bytes)
        result = {"model": modelled.model_dump()}
        if measure:
            result["loopback"] = asyncio.run(measure_loopback(payload, chunk_bytes)).model_dump()
    _emit(result, out)


# ============================================================================
# Telemetry
# ============================================================================


telemetry_app = typer.Typer(help="Analyze recorded training telemetry")
app.add_typer(telemetry_app, name="telemetry")


@telemetry_app.command("analyze")
def telemetry_analyze(
    ctx: typer.Context,
    spool: Path = typer.Option(..., "--spool", help="Directory of *.events.jsonl spool files"),
    stragglers: bool = typer.Option(False, "--stragglers", help="Flag slow ranks"),
    stage: str = typer.Option("backward", "--stage", help="Stage compared across ranks"),
    k: float = typer.Option(None, "--k", help="Straggler threshold in MADs"),
    effective_time: bool = typer.Option(False, "--effective-time", help="Effective training time ratio"),
    data_stats: bool = typer.Option(False, "--data-stats", help="Data and failure distributions"),
    restart_check: Path = typer.Option(None, "--restart-check", help="JSON of active health signals"),
    export: Path = typer.Option(None, "--export", help="Write per-kind tables to this directory"),
    out: Path = typer.Option(None, "--out", "-o"),
):
    """Ingest spool files and run the selected analyses."""
    from ditforge.telemetry.analysis import (
        active_signals,
        data_distribution,
        detect_stragglers,
        effective_training_time,
        failure_stats,
        read_signals,
        restart_decision,
        stage_breakdown,
    )
    from ditforge.telemetry.store import ingest

    settings = _settings(ctx).telemetry
    result: dict = {}
    with _domain_errors():
        store = ingest(spool)
        result["events"] = len(store)
        result["quarantined"] = [asdict(q) for q in store.quarantined]
        result["stages"] = {name: s.model_dump() for name, s in stage_breakdown(store).items()}
        if stragglers:
            report = detect_stragglers(store, stage, settings.straggler_k if k is None else k)
            result["stragglers"] = report.model_dump()
        if effective_time:
            result["effective_training_time"] = effective_training_time(store)
        if data_stats:
            result["data"] = data_distribution(store).model_dump()
            if len(store.faults):
                result["failures"] = failure_stats(store).model_dump()
        if restart_check is not None:
            signals = read_signals(restart_check) | active_signals(store)
            result["restart"] = {
                "signals": sorted(signals),
                "decision": restart_decision(signals, settings.restart_quorum),
            }
        if export is not None:
            result["exported"] = [str(p) for p in store.export(export)]
    _emit(result, out)
