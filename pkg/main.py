import logging
import sys
from functools import wraps
from pathlib import Path
from typing import Any, Callable

import click
from rich.logging import RichHandler

from commands import cmd_gradcheck, cmd_report, cmd_run, cmd_sweep, cmd_synth
from config.config import AssignmentMode, AttentionVariant, DenominatorVariant, ExperimentConfig
from config.loader import load_config
from ui.tui import TUI, get_console
from utils.errors import CIGNError

console = get_console()

# 布尔开关只在显式给出时才覆盖配置文件
FLAG_OPTIONS = ("disable_kl", "disable_ce_new", "disable_ctl", "disable_buffer", "upper_bound", "gumbel_noise")


def setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False, show_time=False)],
        force=True,
    )


def experiment_options(f: Callable) -> Callable:
    """synth / run / sweep 共用的配置 flags"""
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="JSON or TOML config file"),
        click.option("--out", "out_dir", type=click.Path(path_type=Path), help="Output directory"),
        click.option("--seed", type=int),
        click.option("--tasks", type=int),
        click.option("--classes-per-task", type=int),
        click.option("--depth", type=int, help="Self-attention layers per modality"),
        click.option("--tau", type=float, help="Contrastive temperature"),
        click.option("--epochs", type=int),
        click.option("--batch-size", type=int),
        click.option("--lr", "learning_rate", type=float),
        click.option("--buffer", "buffer_capacity", type=int, help="Rehearsal samples kept per class"),
        click.option("--assignment", "assignment_mode", type=click.Choice([m.value for m in AssignmentMode])),
        click.option("--ctl-denominator", "ctl_denominator", type=click.Choice([v.value for v in DenominatorVariant])),
        click.option("--attention", "attention_variant", type=click.Choice([v.value for v in AttentionVariant])),
        click.option("--dataset", "dataset_path", type=click.Path(exists=True, path_type=Path), help="Precomputed features"),
        click.option("--disable-kl", is_flag=True),
        click.option("--disable-ce-new", is_flag=True),
        click.option("--disable-ctl", is_flag=True),
        click.option("--disable-buffer", is_flag=True),
        click.option("--upper-bound", is_flag=True, help="Train all classes jointly as one task"),
        click.option("--gumbel-noise", is_flag=True, help="Gumbel noise for hard assignment during training"),
        click.option("--verbose", "-v", is_flag=True),
    ]
    for option in reversed(options):
        f = option(f)

    @wraps(f)
    def wrapper(**kwargs: Any) -> Any:
        setup_logging(kwargs.pop("verbose"))
        config_path = kwargs.pop("config_path")
        overrides = {k: v for k, v in kwargs.items() if k not in FLAG_OPTIONS and k in ExperimentConfig.model_fields}
        overrides.update({k: True for k in FLAG_OPTIONS if kwargs.get(k)})
        rest = {k: v for k, v in kwargs.items() if k not in ExperimentConfig.model_fields}
        cfg = run_command(lambda: load_config(config_path, overrides))
        return f(cfg=cfg, **rest)

    return wrapper


def run_command(fn: Callable[[], Any]) -> Any:
    try:
        return fn()
    except CIGNError as e:
        TUI(console).error(str(e))
        logging.getLogger(__name__).debug("Command failed", exc_info=True)
        sys.exit(1)


@click.group()
def main() -> None:
    """Class-incremental grouping network for continual audio-visual classification."""


@main.command()
@experiment_options
def synth(cfg: ExperimentConfig) -> None:
    """Generate a synthetic audio-visual feature dataset under --out."""
    run_command(lambda: cmd_synth(cfg, cfg.out_dir, TUI(console)))


@main.command()
@experiment_options
@click.option("--show-steps", is_flag=True, help="Print every training step")
def run(cfg: ExperimentConfig, show_steps: bool) -> None:
    """Train over the task sequence and write metrics, matrix, log and checkpoint."""
    tui = TUI(console)
    tui.print_welcome(
        "CIGN",
        lines=[
            f"ablation: {cfg.ablation}",
            f"tasks: {cfg.tasks} x {cfg.classes_per_task} classes, D={cfg.dim}, P={cfg.patches}",
            f"depth: {cfg.depth}, assignment: {cfg.assignment_mode.value}, attention: {cfg.attention_variant.value}",
            f"out: {cfg.out_dir}",
        ],
    )
    run_command(lambda: cmd_run(cfg, tui, show_steps=show_steps))


@main.command()
@experiment_options
@click.option("--param", required=True, help="Config field to vary, e.g. depth, buffer, assignment")
@click.option("--values", required=True, help="Comma-separated values")
def sweep(cfg: ExperimentConfig, param: str, values: str) -> None:
    """One full run per value, summarized in sweep.csv."""
    parsed = [v.strip() for v in values.split(",") if v.strip()]
    run_command(lambda: cmd_sweep(cfg, param, parsed, TUI(console)))


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--trials", type=int, default=10, show_default=True)
@click.option("--tolerance", type=float, default=1e-4, show_default=True)
@click.option("--inject-fault", "fault", help="Corrupt one op's backward rule")
@click.option("--verbose", "-v", is_flag=True)
def gradcheck(seed: int, trials: int, tolerance: float, fault: str | None, verbose: bool) -> None:
    """Finite-difference check of every differentiable op and the full training loss."""
    setup_logging(verbose)
    run_command(lambda: cmd_gradcheck(seed, TUI(console), trials, tolerance, fault))


@main.command()
@click.argument("run_dir", type=click.Path(path_type=Path))
@click.option("--verbose", "-v", is_flag=True)
def report(run_dir: Path, verbose: bool) -> None:
    """Summarize a finished run and write summary.csv."""
    setup_logging(verbose)
    run_command(lambda: cmd_report(run_dir, TUI(console)))


if __name__ == "__main__":
    main()
