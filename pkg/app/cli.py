"""
Command-line surface.

Commands:
- `run --manifest PATH`: full evaluation (rollouts, scoring, report and dumps).
- `score --trajectories PATH --gold PATH`: offline scoring with loss masks, no model calls.
- `kg serve --triples PATH... --entity-aliases PATH --relation-aliases PATH --port N`.
- `report --input PATH --format table|json|csv`.

Domain errors are printed in red and exit with status 1; `score` exits with 3 when the
dump holds no trajectories.
"""

import asyncio
from pathlib import Path
from typing import NoReturn

import typer
import uvicorn
from rich.console import Console

from app.config import Config
from app.core.exceptions import HopSearchError
from app.core.logging import configure_logging
from app.main import create_app
from app.services.evaluation import evaluate, load_manifest, load_report, report_render, score_offline
from app.services.kg_engine import KgEngine, load_store

cli = typer.Typer(help="Agentic search runtime: rollouts, rewards and evaluation.", no_args_is_help=True)
kg_cli = typer.Typer(help="Knowledge graph service.", no_args_is_help=True)
cli.add_typer(kg_cli, name="kg")

err_console = Console(stderr=True)

EXIT_NO_WORK = 3
FORMATS = ("table", "json", "csv")


def _check_format(value: str) -> str:
    if value not in FORMATS:
        raise typer.BadParameter(f"expected one of: {', '.join(FORMATS)}")
    return value


def _fail(exc: Exception) -> NoReturn:
    err_console.print(f"error: {exc}", style="red", markup=False, highlight=False)
    raise typer.Exit(code=1)


@cli.callback()
def main(log_level: str = typer.Option(Config.LOG_LEVEL, "--log-level", help="Logging level.")):
    configure_logging(log_level)


@cli.command()
def run(
    manifest: Path = typer.Option(..., "--manifest", exists=True, dir_okay=False, help="Run manifest (JSON)."),
    fmt: str = typer.Option("table", "--format", callback=_check_format, help="Summary format: table, json or csv."),
):
    """Run rollouts for every question in the manifest, score them and write the report."""
    try:
        report = asyncio.run(evaluate(load_manifest(manifest)))
    except HopSearchError as exc:
        _fail(exc)
    typer.echo(report_render(report, fmt), nl=False)
    if report.incomplete:
        err_console.print(f"report incomplete: {len(report.errors)} error(s)", style="yellow")


@cli.command()
def score(
    trajectories: Path = typer.Option(..., "--trajectories", exists=True, dir_okay=False),
    gold: Path = typer.Option(..., "--gold", exists=True, dir_okay=False),
    output: Path | None = typer.Option(None, "--output", help="Score JSONL; defaults to scores.jsonl beside the dump."),
    fmt: str = typer.Option("table", "--format", callback=_check_format, help="Report format: table, json or csv."),
):
    """Score a trajectory dump and emit reward breakdowns plus loss masks."""
    scores_path = output or trajectories.with_name("scores.jsonl")
    try:
        report, lines = score_offline(trajectories, gold, scores_path=scores_path)
    except HopSearchError as exc:
        _fail(exc)
    if not lines and not report.rows:
        err_console.print("no trajectories to score", style="yellow")
        raise typer.Exit(code=EXIT_NO_WORK)
    typer.echo(report_render(report, fmt), nl=False)


@kg_cli.command("serve")
def kg_serve(
    triples: list[Path] = typer.Option(..., "--triples", exists=True, dir_okay=False, help="Triple file; repeatable."),
    entity_aliases: Path = typer.Option(..., "--entity-aliases", exists=True, dir_okay=False),
    relation_aliases: Path = typer.Option(..., "--relation-aliases", exists=True, dir_okay=False),
    missing_alias: str = typer.Option(Config.KG_MISSING_ALIAS_POLICY, "--missing-alias", help="reject or retain."),
    host: str = typer.Option("127.0.0.1", "--host"),
    port: int = typer.Option(8001, "--port"),
):
    """Load a knowledge graph and serve /kg/search and /kg/stats."""
    try:
        store = load_store(triples, entity_aliases, relation_aliases, missing_alias)
    except HopSearchError as exc:
        _fail(exc)
    uvicorn.run(create_app(KgEngine(store)), host=host, port=port, log_level=Config.LOG_LEVEL.lower())


@cli.command()
def report(
    input_path: Path = typer.Option(..., "--input", exists=True, dir_okay=False, help="report.json or a CSV export."),
    fmt: str = typer.Option("table", "--format", callback=_check_format, help="table, json or csv."),
):
    """Render a saved report."""
    try:
        loaded = load_report(input_path)
    except HopSearchError as exc:
        _fail(exc)
    typer.echo(report_render(loaded, fmt), nl=False)
