import json
import logging
from pathlib import Path
from typing import Any

import click
from dotenv import load_dotenv
from pydantic import ValidationError
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from upwind_lab.container import catalog, run_experiment
from upwind_lab.data_types import ConfigurationError, NumericalError
from upwind_lab.settings import ExperimentConfig, Settings, set_settings
from upwind_lab.utils.logging import configure_logging

# Try to load .env file automatically if it exists
env_file = Path(".env")
if env_file.exists():
    load_dotenv(env_file)

logger = logging.getLogger(__name__)


class ConfigError(click.ClickException):
    """Invalid experiment configuration."""

    exit_code = 2


class NumericalFailure(click.ClickException):
    """Numerical failure during a run; partial artifacts are on disk."""

    exit_code = 3


def _parse_kv(
    _ctx: click.Context, _param: click.Parameter, value: tuple[str]
) -> dict[str, object]:
    """Convert (--set key=value) repeated tuples to dict."""
    out: dict[str, object] = {}
    for item in value:
        try:
            k, v = item.split("=", 1)
        except ValueError as exc:
            msg = f"{item!r} is not of the form key=value"
            raise click.BadParameter(msg) from exc

        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


@click.group()
@click.option(
    "--env-file",
    type=click.Path(exists=True, dir_okay=False, readable=True),
    help="Path to a .env file to load environment variables from.",
    default=None,
    is_eager=True,
    expose_value=False,
    callback=lambda _ctx, _param, value: load_dotenv(value),
)
@click.option(
    "-v",
    "--verbose",
    count=True,
    help="Increase logging verbosity (can be used multiple times).",
    default=1,
)
@click.option(
    "-q", "--quiet", is_flag=True, help="Suppress all but error and critical logging."
)
@click.option(
    "--logging-plain",
    is_flag=True,
    help="Use plain logging format.",
    show_envvar=True,
    envvar="UPWIND_LAB_LOGGING_PLAIN",
)
def cli(*, verbose: int, quiet: bool, logging_plain: bool) -> None:
    """Run upwind scheme experiments on non-cartesian meshes."""
    configure_logging(verbose=verbose, quiet=quiet, plain=logging_plain)


@cli.command()
@click.option(
    "--config",
    type=click.Path(dir_okay=False, path_type=Path),
    help="TOML file defining the experiment.",
    default=None,
)
@click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    help="Output directory; overrides the config.",
    default=None,
)
@click.option("--seed", type=int, help="Seed; overrides the config.", default=None)
@click.option(
    "--workers",
    type=click.IntRange(min=1),
    help="Worker threads of the parallel library routines.",
    default=None,
    show_envvar=True,
    envvar="UPWIND_LAB_WORKERS",
)
@click.option(
    "--set",
    "overrides",
    multiple=True,
    metavar="KEY=VAL",
    callback=_parse_kv,
    help="Override a config value by its dotted key, e.g. params.t_end=0.5. "
    "Can be specified multiple times.",
)
def run(
    *,
    config: Path | None,
    out: Path | None,
    seed: int | None,
    workers: int | None,
    overrides: dict[str, Any],
) -> None:
    """Run the experiment defined by a config file."""
    if out is not None:
        overrides["output"] = str(out)
    if seed is not None:
        overrides["seed"] = seed

    try:
        set_settings(Settings() if workers is None else Settings(workers=workers))
        experiment = ExperimentConfig.from_toml(config, overrides)
        summary = run_experiment(experiment)
    except (ConfigurationError, ValidationError, FileNotFoundError, ImportError) as exc:
        raise ConfigError(str(exc)) from exc
    except NumericalError as exc:
        msg = f"{type(exc).__name__}: {exc}"
        raise NumericalFailure(msg) from exc

    logger.info(
        "%s finished; %d artifacts in %s",
        summary.experiment,
        len(summary.artifacts) + 1,
        experiment.output,
    )


@cli.command(name="catalog")
@click.option("--json", "as_json", is_flag=True, help="Print the catalog as JSON.")
def list_catalog(*, as_json: bool) -> None:
    """List the built-in meshes, fields and experiments."""
    entries = catalog()
    if as_json:
        click.echo(json.dumps(entries, indent=2))
        return

    console = Console()
    for kind in ("meshes", "fields"):
        table = Table(title=kind.capitalize())
        table.add_column("token")
        table.add_column("parameters")
        table.add_column("description")
        for entry in entries[kind]:
            description = entry["description"]
            if "sobolev" in entry:
                description = f"{description} ({entry['sobolev']})"
            params = ", ".join(f"{k}={v}" for k, v in entry["params"].items())
            table.add_row(entry["token"], escape(params), escape(description))
        console.print(table)
    table = Table(title="Experiments")
    table.add_column("token")
    table.add_column("description")
    for entry in entries["experiments"]:
        table.add_row(entry["token"], entry["description"])
    console.print(table)


if __name__ == "__main__":
    cli()
