"""
gssc CLI module
"""

import functools
import json
import logging
from pathlib import Path
from typing import Any, Callable, List, Optional

import click
import yaml
from rich.console import Console
from rich.progress import BarColumn, Progress, TextColumn, TimeElapsedColumn
from rich.table import Table

from . import __version__
from .codec.coder import predict_clouds
from .codec.container import read_container
from .codec.model import GsscModel
from .codec.qp import QP_PRESETS, QpSchedule, qp_sequence, resolve_qp
from .core.errors import ConfigurationError, FormatError, GsscError, handle_error
from .core.logging import setup_logging
from .core.store import DatasetStore
from .geometry.camera import VIEWS, CameraRig, View, load_target_cameras
from .metrics.bdrate import METHODS, METRICS, bd_rate
from .metrics.rate import bpp
from .metrics.report import emit_rd, read_rd
from .pipeline.config import RunConfig, load_config
from .pipeline.evaluate import evaluate_stream, rd_sweep, spearman, time_pipeline
from .pipeline.sequence import decode_and_render, encode_sequence
from .pipeline.synthetic import SceneSpec, load_dataset, make_synthetic
from .pipeline.training import smoothed, train_toy
from .render.image_io import load_frames
from .render.rasterizer import apply_thread_limit
from .tensor.io import atomic_write

console = Console()
logger = logging.getLogger(__name__)


def guarded(func: Callable) -> Callable:
    """Map gssc errors to their exit codes; anything else exits with 1."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except GsscError as e:
            handle_error(logger, e, func.__name__.replace("_", "-"))
            console.print(f"[bold red]Error:[/bold red] {e.message}")
            raise SystemExit(e.exit_code)
        except OSError as e:
            handle_error(logger, e, func.__name__.replace("_", "-"))
            console.print(f"[bold red]Error:[/bold red] {e}")
            raise SystemExit(FormatError.exit_code)

    return wrapper


def _run_config(ctx: click.Context, **overrides: Any) -> RunConfig:
    config = load_config(ctx.obj.get("config"), **overrides)
    apply_thread_limit(config.threads)
    return config


def _load_model(ckpt: Optional[str], config: RunConfig,
                expected_hash: Optional[int] = None) -> GsscModel:
    if ckpt:
        return GsscModel.load(ckpt, expected_hash)
    logger.warning("No checkpoint given; using an untrained model seeded from the run config")
    return GsscModel(config.model_config())


@click.group()
@click.version_option(version=__version__)
@click.option("--debug", is_flag=True, help="Enable debug logging")
@click.option("--log-dir", type=click.Path(file_okay=False), help="Write gssc.log here")
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              help="Run configuration (key = value text or YAML)")
@click.pass_context
def cli(ctx: click.Context, debug: bool, log_dir: Optional[str],
        config_path: Optional[str]) -> None:
    """gssc - Stereo semantic codec with Gaussian-splat novel views"""
    ctx.ensure_object(dict)
    setup_logging(Path(log_dir) if log_dir else None, debug, Console(stderr=True))
    ctx.obj["config"] = config_path


@cli.command()
@click.option("--left", required=True, type=click.Path(exists=True, file_okay=False),
              help="Left frames (.ppm or .gst)")
@click.option("--right", required=True, type=click.Path(exists=True, file_okay=False),
              help="Right frames (.ppm or .gst)")
@click.option("--cams", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Camera rig JSON")
@click.option("--qp", help="Base QP (0-63) or preset p0-p5")
@click.option("--pattern", help="QP offset pattern, e.g. 0,8,0,4")
@click.option("--gop", type=int, help="GOP length")
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False), help="Checkpoint archive")
@click.option("--disparity", type=click.Path(exists=True, file_okay=False),
              help="Dataset directory whose ground-truth disparity replaces the estimate")
@click.option("--threads", type=int, help="Worker thread cap")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False),
              help="Output .gssc container")
@click.pass_context
@guarded
def encode(ctx: click.Context, left: str, right: str, cams: str, qp: Optional[str],
           pattern: Optional[str], gop: Optional[int], ckpt: Optional[str],
           disparity: Optional[str], threads: Optional[int], output: str) -> None:
    """Encode a rectified stereo sequence"""
    config = _run_config(ctx, qp=qp, pattern=pattern, gop=gop, threads=threads)
    rig = CameraRig.load(cams)
    frames = {View.LEFT: load_frames(left), View.RIGHT: load_frames(right)}
    model = _load_model(ckpt, config)
    gt = None
    if disparity:
        store = DatasetStore(disparity, create=False)
        gt = {v: [store.load_disparity(v, t) for t in range(len(frames[v]))] for v in VIEWS}
        if any(d is None for v in VIEWS for d in gt[v]):
            raise FormatError(f"{disparity} lacks disparity for some frames")
    result = encode_sequence(frames, rig, config, model, gt)
    atomic_write(Path(output), result.data)
    rate = bpp(result.stream)
    console.print(f"[green]Encoded {result.frame_count} frames[/green] -> {output} "
                  f"({len(result.data)} bytes, {rate.average:.4f} bpp)")


@cli.command()
@click.argument("stream", type=click.Path(exists=True, dir_okay=False))
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False), help="Checkpoint archive")
@click.option("--targets", type=click.Path(exists=True, dir_okay=False),
              help="Target cameras JSON; renders novel views as well")
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False),
              help="Output directory")
@click.pass_context
@guarded
def decode(ctx: click.Context, stream: str, ckpt: Optional[str], targets: Optional[str],
           output: str) -> None:
    """Decode a container into source views (and novel views)"""
    config = _run_config(ctx)
    coded = read_container(Path(stream).read_bytes())
    model = _load_model(ckpt, config, coded.header.checkpoint_hash)
    cams = load_target_cameras(targets) if targets else []
    result = decode_and_render(coded, model, cams, config.background)
    store = DatasetStore(output)
    for v in VIEWS:
        for t, image in enumerate(result.images[v]):
            store.save_frame(v, t, image)
    for k, frames in enumerate(result.renders):
        for t, image in enumerate(frames):
            store.save_target(k, t, image)
    store.save_rig(coded.header.rig)
    console.print(f"[green]Decoded {len(coded.frames)} frames[/green] -> {output}")


@cli.command()
@click.argument("stream", type=click.Path(exists=True, dir_okay=False))
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False), help="Checkpoint archive")
@click.option("--targets", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Target cameras JSON")
@click.option("--ply", is_flag=True, help="Also export each frame's Gaussians as PLY")
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False),
              help="Output directory")
@click.pass_context
@guarded
def render(ctx: click.Context, stream: str, ckpt: Optional[str], targets: str, ply: bool,
           output: str) -> None:
    """Render novel views from a container"""
    config = _run_config(ctx)
    coded = read_container(Path(stream).read_bytes())
    model = _load_model(ckpt, config, coded.header.checkpoint_hash)
    cams = load_target_cameras(targets)
    result = decode_and_render(coded, model, cams, config.background)
    store = DatasetStore(output)
    for k, frames in enumerate(result.renders):
        for t, image in enumerate(frames):
            store.save_target(k, t, image)
    if ply:
        for t, recon in enumerate(result.reconstructions):
            cloud = predict_clouds(model, recon, coded.header.rig,
                                   residuals=coded.header.residuals)
            cloud.to_ply(Path(output) / "gaussians" / f"{t:04d}.ply")
    console.print(f"[green]Rendered {len(cams)} views x {len(coded.frames)} frames[/green] "
                  f"-> {output}")


@cli.command(name="eval")
@click.argument("dataset", type=click.Path(exists=True, file_okay=False))
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False), help="Checkpoint archive")
@click.option("--stream", type=click.Path(exists=True, dir_okay=False),
              help="Evaluate this container instead of sweeping QPs")
@click.option("--qps", help="Comma-separated base QPs or presets for the sweep")
@click.option("--label", default="gssc", show_default=True, help="Curve label")
@click.option("--timing", is_flag=True, help="Report transmitter/receiver time and fps")
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="RD CSV (SVG alongside)")
@click.pass_context
@guarded
def eval_command(ctx: click.Context, dataset: str, ckpt: Optional[str], stream: Optional[str],
                 qps: Optional[str], label: str, timing: bool, output: Optional[str]) -> None:
    """Evaluate rate and novel-view quality against a dataset"""
    config = _run_config(ctx)
    data = load_dataset(dataset)
    if stream:
        coded = read_container(Path(stream).read_bytes())
        model = _load_model(ckpt, config, coded.header.checkpoint_hash)
        decoded = decode_and_render(coded, model, data.rig.targets, config.background)
        points = [evaluate_stream(coded, decoded, data.targets).point(label)]
    else:
        model = _load_model(ckpt, config)
        sweep = [resolve_qp(q.strip()) for q in qps.split(",")] if qps else list(QP_PRESETS)
        points = rd_sweep(model, data, config, sweep, label)

    table = Table(title="Rate-distortion")
    for column in ("label", "bpp", "PSNR (dB)", "SSIM"):
        table.add_column(column)
    for p in points:
        table.add_row(p.label, f"{p.bpp:.4f}", f"{p.psnr:.2f}", f"{p.ssim:.4f}")
    console.print(table)
    if len(points) > 2:
        rho = spearman([p.bpp for p in points], [p.psnr for p in points])
        if rho is not None:
            console.print(f"Spearman rho(bpp, PSNR) = {rho:.3f}")
    if output:
        emit_rd(points, output)
        console.print(f"Wrote {output}")

    if timing:
        report, _ = time_pipeline(model, data, config)
        t = Table(title="Timing (informative)")
        t.add_column("metric")
        t.add_column("value")
        for key, value in report.to_dict().items():
            t.add_row(key, f"{value:.2f}")
        console.print(t)


@cli.command(name="train-toy")
@click.argument("dataset", required=False, type=click.Path(file_okay=False))
@click.option("--stage1-steps", type=int, help="Source-reconstruction steps")
@click.option("--stage2-steps", type=int, help="End-to-end steps")
@click.option("--seed", type=int, help="Seed for the model and the sampler")
@click.option("--rd", type=click.Path(dir_okay=False), help="Sweep the presets and write RD CSV")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False),
              help="Checkpoint archive to write")
@click.pass_context
@guarded
def train_toy_command(ctx: click.Context, dataset: Optional[str], stage1_steps: Optional[int],
                      stage2_steps: Optional[int], seed: Optional[int], rd: Optional[str],
                      output: str) -> None:
    """Two-stage training on a synthetic scene"""
    config = _run_config(ctx, stage1_steps=stage1_steps, stage2_steps=stage2_steps, seed=seed)
    data = load_dataset(dataset) if dataset else make_synthetic(SceneSpec(), config.seed)
    total = config.stage1_steps + config.stage2_steps

    with Progress(TextColumn("[bold blue]stage {task.fields[stage]}"), BarColumn(),
                  TextColumn("{task.completed}/{task.total}"),
                  TextColumn("loss {task.fields[loss]:.4f}"), TimeElapsedColumn(),
                  console=console) as progress:
        task = progress.add_task("train", total=total, stage=1, loss=0.0)

        def on_step(step: int, stage: int, loss: float) -> None:
            progress.update(task, advance=1, stage=stage, loss=loss)

        result = train_toy(data, config, callback=on_step)

    fingerprint = result.model.save(output)
    if result.losses:
        curve = smoothed(result.losses)
        console.print(f"Smoothed loss {curve[0]:.4f} -> {curve[-1]:.4f}")
    console.print(f"[green]Saved checkpoint[/green] {output} (hash {fingerprint:016x})")
    if rd:
        points = rd_sweep(result.model, data, config)
        emit_rd(points, rd)
        console.print(f"Wrote {rd}")


@cli.command()
@click.argument("anchor", type=click.Path(exists=True, dir_okay=False))
@click.argument("test", type=click.Path(exists=True, dir_okay=False))
@click.option("--metric", type=click.Choice(METRICS), default="psnr", show_default=True)
@click.option("--method", type=click.Choice(METHODS), default="cubic", show_default=True)
@guarded
def bdrate(anchor: str, test: str, metric: str, method: str) -> None:
    """BD-rate of TEST against ANCHOR (negative is better)"""
    value = bd_rate(read_rd(anchor), read_rd(test), metric, method)
    console.print(f"BD-rate ({metric}, {method}): {value:+.3f}%")


@cli.command()
@click.argument("scene_file", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True, help="Texture seed")
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False),
              help="Dataset directory")
@guarded
def synth(scene_file: Optional[str], seed: int, output: str) -> None:
    """Generate a synthetic stereo dataset from a scene description (YAML or JSON)"""
    scene = SceneSpec()
    if scene_file:
        try:
            with open(scene_file, "r", encoding="utf-8") as f:
                values = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(f"scene file is not valid YAML/JSON: {e}") from e
        if not isinstance(values, dict):
            raise ConfigurationError("scene file must hold a mapping")
        scene = SceneSpec.from_dict(values)
    data = make_synthetic(scene, seed, output)
    console.print(f"[green]Wrote {data.frame_count} frames[/green] "
                  f"({scene.width}x{scene.height}, {len(data.rig.targets)} targets) -> {output}")


@cli.command()
@click.argument("stream", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False), help="Checkpoint archive")
@guarded
def info(stream: Optional[str], ckpt: Optional[str]) -> None:
    """Show container header and/or checkpoint parameter counts"""
    if not stream and not ckpt:
        raise click.UsageError("give a STREAM, --ckpt or both")
    if stream:
        coded = read_container(Path(stream).read_bytes())
        h = coded.header
        rate = bpp(coded)
        schedule = QpSchedule(h.base_qp, h.pattern, h.gop)
        table = Table(title=f"Container {stream}")
        table.add_column("field")
        table.add_column("value")
        rows: List[tuple] = [
            ("size", f"{h.width}x{h.height}"),
            ("frames", str(h.frame_count)),
            ("base QP", str(h.base_qp)),
            ("pattern", ",".join(str(v) for v in h.pattern)),
            ("GOP", str(h.gop)),
            ("QPs", ",".join(str(q) for q in qp_sequence(schedule, h.frame_count))),
            ("cross-view", h.cross_view),
            ("residuals", "on" if h.residuals else "off"),
            ("checkpoint", f"{h.checkpoint_hash:016x}" if h.checkpoint_hash is not None else "-"),
            ("payload bytes", str(rate.payload_bytes)),
            ("bpp", f"{rate.average:.4f}"),
        ]
        for row in rows:
            table.add_row(*row)
        console.print(table)
    if ckpt:
        model = GsscModel.load(ckpt)
        table = Table(title=f"Checkpoint {ckpt}")
        table.add_column("sub-network")
        table.add_column("parameters", justify="right")
        for name, count in model.parameter_counts().items():
            table.add_row(name, f"{count:,}")
        console.print(table)
        console.print(json.dumps(model.config.to_dict(), sort_keys=True))


if __name__ == "__main__":
    cli()
