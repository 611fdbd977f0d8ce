"""
Tests for the command-line surface.

Purpose:
- `run`, `score`, `report` and `kg serve` wiring, output formats and exit codes.

Impact on SDLC:
- The CLI is the entry point of every experiment; exit codes are checked like API status codes.
"""

import json

from fastapi.testclient import TestClient
from typer.testing import CliRunner

from app.cli import EXIT_NO_WORK, cli

runner = CliRunner()


def write_manifest(tmp_path, fixtures_dir):
    manifest = {
        "datasets": [str(fixtures_dir / "gold_crew.jsonl")],
        "corpus": str(fixtures_dir / "corpus.jsonl"),
        "kg": {
            "triples": [str(fixtures_dir / "crew_triples.tsv")],
            "entity_aliases": str(fixtures_dir / "crew_entities.tsv"),
            "relation_aliases": str(fixtures_dir / "crew_relations.tsv"),
        },
        "llm": {"kind": "scripted", "script": str(fixtures_dir / "script_crew.json")},
        "output_dir": "out",
    }
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest), encoding="utf-8")
    return path


def test_run_then_score_and_report(tmp_path, fixtures_dir):
    manifest = write_manifest(tmp_path, fixtures_dir)

    result = runner.invoke(cli, ["--log-level", "WARNING", "run", "--manifest", str(manifest), "--format", "json"])
    assert result.exit_code == 0, result.output
    assert json.loads(result.stdout)["rows"][0]["answer"] == "Skeleton Crew"

    out = tmp_path / "out"
    scored = runner.invoke(
        cli,
        ["--log-level", "WARNING", "score", "--trajectories", str(out / "trajectories.jsonl"), "--gold", str(fixtures_dir / "gold_crew.jsonl"),
         "--output", str(tmp_path / "rescored.jsonl"), "--format", "csv"],
    )
    assert scored.exit_code == 0, scored.output
    assert scored.stdout.splitlines()[1].startswith("gold_crew,frames-crew,Skeleton Crew,1.0,1.0,1.0,3,answered,1.5")
    assert (tmp_path / "rescored.jsonl").read_text(encoding="utf-8") == (out / "scores.jsonl").read_text(encoding="utf-8")

    shown = runner.invoke(cli, ["report", "--input", str(out / "report.json")])
    assert shown.exit_code == 0
    assert "Metrics (%)" in shown.stdout
    assert "100.0" in shown.stdout


def test_score_empty_dump_exits_with_no_work(tmp_path, fixtures_dir):
    dump = tmp_path / "trajectories.jsonl"
    dump.write_text("", encoding="utf-8")
    result = runner.invoke(cli, ["score", "--trajectories", str(dump), "--gold", str(fixtures_dir / "gold_crew.jsonl")])
    assert result.exit_code == EXIT_NO_WORK


def test_invalid_manifest_exits_with_error(tmp_path):
    manifest = tmp_path / "manifest.json"
    manifest.write_text("{broken", encoding="utf-8")
    result = runner.invoke(cli, ["run", "--manifest", str(manifest)])
    assert result.exit_code == 1


def test_unknown_format_is_rejected(tmp_path, fixtures_dir):
    result = runner.invoke(cli, ["report", "--input", str(fixtures_dir / "gold_crew.jsonl"), "--format", "xml"])
    assert result.exit_code == 2


def test_kg_serve_loads_the_graph_and_starts_uvicorn(monkeypatch, fixtures_dir):
    started = {}

    def fake_run(app, host, port, log_level):
        started.update(app=app, host=host, port=port)

    monkeypatch.setattr("app.cli.uvicorn.run", fake_run)
    result = runner.invoke(
        cli,
        ["kg", "serve", "--triples", str(fixtures_dir / "toy_triples.tsv"),
         "--entity-aliases", str(fixtures_dir / "toy_entities.tsv"),
         "--relation-aliases", str(fixtures_dir / "toy_relations.tsv"), "--port", "8123"],
    )
    assert result.exit_code == 0, result.output
    assert (started["host"], started["port"]) == ("127.0.0.1", 8123)

    with TestClient(started["app"]) as client:
        assert client.get("/kg/stats").json() == {"triples": 12, "entities": 8, "relations": 4}


def test_kg_serve_reports_load_errors(monkeypatch, tmp_path, fixtures_dir):
    monkeypatch.setattr("app.cli.uvicorn.run", lambda *args, **kwargs: None)
    broken = tmp_path / "broken.tsv"
    broken.write_text("Q1\tP1\n", encoding="utf-8")
    result = runner.invoke(
        cli,
        ["kg", "serve", "--triples", str(broken),
         "--entity-aliases", str(fixtures_dir / "toy_entities.tsv"),
         "--relation-aliases", str(fixtures_dir / "toy_relations.tsv")],
    )
    assert result.exit_code == 1
