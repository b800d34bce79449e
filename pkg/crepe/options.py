from pathlib import Path

import click

debug_option = click.option("--debug", is_flag=True, help="Show debug logs")
"""A click option for enabling debug logs."""

config_option = click.option(
    "--config",
    "config_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="the experiment config file",
)
"""A click option for the path to an experiment config."""

set_option = click.option(
    "--set",
    "overrides",
    multiple=True,
    metavar="PATH=VALUE",
    help="override a config leaf by its dotted path (repeatable)",
)
"""A click option for dotted-path config overrides."""

seed_option = click.option("--seed", type=click.IntRange(min=0), help="override the seed")

out_option = click.option(
    "--out",
    "output",
    type=click.Path(file_okay=False, path_type=Path),
    help="the output directory",
)
"""A click option for the run output directory."""

workers_option = click.option(
    "--workers",
    type=click.IntRange(min=1),
    help="threads used by the sampler; results do not depend on it",
)
