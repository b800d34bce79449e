import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

import click
from rich.table import Table
from structlog import get_logger

from crepe.errors import CrepeError
from crepe.harness.config import load_config
from crepe.harness.experiment import (
    MetricReport,
    RunMode,
    report as recompute_report,
    resume_experiment,
    run_experiment,
)
from crepe.harness.verify import SUITES, console, print_result, run_suites
from crepe.options import (
    config_option,
    debug_option,
    out_option,
    seed_option,
    set_option,
    workers_option,
)
from crepe.utils.logging import configure_logger, echo_error

logger = get_logger("harness.cli")


@contextmanager
def exit_on_error() -> Iterator[None]:
    """Print sampler errors and exit with their code."""
    try:
        yield
    except CrepeError as e:
        echo_error(e)
        sys.exit(e.exit_code)


def print_report(report: MetricReport):
    summary = Table.grid(padding=(0, 2, 0, 2))
    summary.add_column(style="bold")
    summary.add_column()

    for name, value in report.model_dump(
        exclude={"acceptance_rates", "ess_trace"},
        exclude_none=True,
    ).items():
        summary.add_row(name, f"{value:.4g}" if isinstance(value, float) else str(value))

    console.print(summary)

    if report.acceptance_rates:
        table = Table("pair", "acceptance", title="Swap acceptance")

        for m, rate in enumerate(report.acceptance_rates, start=1):
            table.add_row(f"{m - 1}-{m}", f"{rate:.4f}")

        console.print(table)


def _run(mode: RunMode, config_path, overrides, seed, output, workers):
    with exit_on_error():
        config = load_config(config_path, overrides, seed, output, workers)
        print_report(run_experiment(config, mode))


@click.command()
@config_option
@set_option
@seed_option
@out_option
@workers_option
@debug_option
def run(
    config_path: Path,
    overrides: tuple[str, ...],
    seed: int | None,
    output: Path | None,
    workers: int | None,
    debug: bool,
):
    """Sample with replica exchange."""
    configure_logger(debug)
    _run(RunMode.PT, config_path, overrides, seed, output, workers)


@click.command()
@config_option
@set_option
@seed_option
@out_option
@debug_option
def smc(
    config_path: Path,
    overrides: tuple[str, ...],
    seed: int | None,
    output: Path | None,
    debug: bool,
):
    """Sample with sequential Monte Carlo."""
    configure_logger(debug)
    _run(RunMode.SMC, config_path, overrides, seed, output, None)


@click.command()
@click.option(
    "--suite",
    "suites",
    multiple=True,
    help=f"the suite to run (repeatable); one of {', '.join(SUITES)}",
)
@click.option("--all", "run_all", is_flag=True, help="run every suite")
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@debug_option
def verify(suites: tuple[str, ...], run_all: bool, seed: int, debug: bool):
    """Check the samplers against exact oracles."""
    configure_logger(debug)

    names = list(SUITES) if run_all else list(suites)

    if not names:
        click.echo("No suites given. Use --suite or --all.", err=True)
        sys.exit(2)

    with exit_on_error():
        results = run_suites(names, seed)

    for result in results:
        print_result(result)

    failed = [result.name for result in results if not result.passed]

    if failed:
        logger.warning("Verification failed", suites=failed)
        sys.exit(3)


@click.command()
@click.option(
    "--checkpoint",
    "checkpoint_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="the checkpoint to continue from",
)
@click.option("--iterations", required=True, type=click.IntRange(min=0))
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="a config the checkpoint must match",
)
@out_option
@workers_option
@debug_option
def resume(
    checkpoint_path: Path,
    iterations: int,
    config_path: Path | None,
    output: Path | None,
    workers: int | None,
    debug: bool,
):
    """Continue a checkpointed replica exchange run."""
    configure_logger(debug)

    with exit_on_error():
        config = load_config(config_path) if config_path else None
        print_report(resume_experiment(checkpoint_path, iterations, config, output, workers))


@click.command()
@click.argument(
    "run_dir",
    type=click.Path(exists=True, file_okay=False, path_type=Path),
)
@debug_option
def report(run_dir: Path, debug: bool):
    """Recompute the metrics of a finished run."""
    configure_logger(debug)

    with exit_on_error():
        recomputed, _ = recompute_report(run_dir)

    print_report(recomputed)
