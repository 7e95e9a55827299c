"""
The ``perclab`` command line. Every experiment kind is a subcommand sharing the options
``--config``, ``--seed``, ``--jobs``, ``--out`` and ``--override key=value``; ``plotdata`` derives
plot-ready CSV files from a result directory. Progress goes to standard error, result paths to
standard output.
"""
import functools

import click

from . import __version__
from .config import KINDS
from .exceptions import PerclabError
from .lab import run
from .plotdata import EMITTERS, emit_plotdata


def handle_errors(func):
    """Turns package errors into a nonzero exit status with the message on standard error."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except PerclabError as e:
            raise click.ClickException(str(e))

    return wrapper


@click.group()
@click.version_option(__version__, prog_name="perclab")
def cli():
    """Percolation experiments: flow constants, Wulff crystals and Cheeger profiles."""


def experiment_command(kind: str) -> click.Command:
    @cli.command(name=kind, help=f"Run the '{kind}' experiment.")
    @click.option(
        "--config",
        "config_path",
        type=click.Path(exists=True, dir_okay=False),
        help="Flat key = value configuration file.",
    )
    @click.option("--seed", type=int, help="Master seed.")
    @click.option("--jobs", type=int, help="Number of worker processes.")
    @click.option("--out", type=click.Path(file_okay=False), help="Output directory.")
    @click.option(
        "--override", "overrides", multiple=True, metavar="KEY=VALUE",
        help="Configuration override, may be repeated.",
    )
    @handle_errors
    def command(config_path, seed, jobs, out, overrides):
        pairs = [f"experiment={kind}", *overrides]
        for key, value in (("seed", seed), ("jobs", jobs), ("out", out)):
            if value is not None:
                pairs.append(f"{key}={value}")
        click.echo(str(run(config_path, pairs)))

    return command


for _kind in KINDS:
    experiment_command(_kind)


@cli.command()
@click.argument("result_dir", type=click.Path(file_okay=False))
@click.option(
    "--kind", type=click.Choice(sorted(EMITTERS)), required=True, help="The plot data to emit."
)
@handle_errors
def plotdata(result_dir, kind):
    """Write plot-ready CSV for RESULT_DIR."""
    click.echo(str(emit_plotdata(result_dir, kind)))


def main():
    cli(prog_name="perclab")
