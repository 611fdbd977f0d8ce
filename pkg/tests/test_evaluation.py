"""
Tests for the evaluation harness.

Purpose:
- Gold dataset and manifest loading, including rejected lines and relative paths.
- `evaluate` with scripted models: metrics, the worked example row, dumps and determinism.
- Offline scoring of a dump reproduces the run's aggregates.
- Report rendering in table, JSON and CSV form.
- Pinned timestamps, outcome-only reward runs and row-order independence of aggregates.

Impact on SDLC:
- A report regenerated from the same manifest must be byte-identical, which makes
  reruns comparable across commits.
"""

import json
from datetime import datetime, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from app.core.exceptions import DatasetLoadError, ManifestError
from app.schemas.evaluation import DatasetAggregate, EvalReport, KgPaths, QuestionRow, RunManifest
from app.schemas.reward import RewardConfig
from app.schemas.rollout import LlmConfig, Termination
from app.services.evaluation import (
    aggregate_rows,
    evaluate,
    load_dataset,
    load_manifest,
    load_report,
    percent,
    report_from_csv,
    report_render,
    score_offline,
)
from app.services.llm import ScriptedLlm


def fixed_clock() -> datetime:
    return datetime(2025, 1, 1, 12, 0, tzinfo=timezone.utc)


def gold_line(record_id: str, answers: list[str], **extra) -> str:
    record = {"id": record_id, "question": f"Question {record_id}?", "answers": answers, "supporting_titles": [], "hops": 1}
    record.update(extra)
    return json.dumps(record)


def answer_chunk(answer: str) -> str:
    return f"<think>Known.</think>\n<answer>The final answer is \\boxed{{{answer}}}</answer>"


@pytest.fixture
def mini_dataset(tmp_path):
    path = tmp_path / "mini.jsonl"
    path.write_text(
        "\n".join([gold_line("a", ["Skeleton Crew"]), gold_line("b", ["Dominique Morisseau"])]) + "\n",
        encoding="utf-8",
    )
    return path


@pytest.fixture
def mini_manifest(tmp_path, mini_dataset, fixtures_dir) -> RunManifest:
    return RunManifest(
        datasets=[mini_dataset],
        corpus=fixtures_dir / "corpus.jsonl",
        llm=LlmConfig(kind="scripted", script=fixtures_dir / "script_crew.json"),
        output_dir=tmp_path / "out",
    )


@pytest.fixture
def crew_manifest(tmp_path, fixtures_dir) -> RunManifest:
    return RunManifest(
        datasets=[fixtures_dir / "gold_crew.jsonl"],
        corpus=fixtures_dir / "corpus.jsonl",
        kg=KgPaths(
            triples=[fixtures_dir / "crew_triples.tsv"],
            entity_aliases=fixtures_dir / "crew_entities.tsv",
            relation_aliases=fixtures_dir / "crew_relations.tsv",
        ),
        llm=LlmConfig(kind="scripted", script=fixtures_dir / "script_crew.json"),
        output_dir=tmp_path / "crew",
    )


MINI_SCRIPTS = {"a": [answer_chunk("Skeleton Crew")], "b": [answer_chunk("playwright Dominique Morisseau")]}


def mini_factory(record, index):
    return ScriptedLlm(MINI_SCRIPTS[record.id])


def test_load_dataset_skips_bad_lines(tmp_path):
    path = tmp_path / "gold.jsonl"
    broken = json.dumps({"id": "x", "question": "?", "hops": 1})
    path.write_text("\n".join([gold_line("a", ["A"]), broken, gold_line("c", ["C"])]) + "\n", encoding="utf-8")
    errors = []
    records = load_dataset(path, errors)
    assert [record.id for record in records] == ["a", "c"]
    assert len(errors) == 1
    assert errors[0].id == "gold.jsonl:2"
    assert "answers" in errors[0].reason


def test_load_dataset_without_valid_records(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(DatasetLoadError):
        load_dataset(empty)
    with pytest.raises(DatasetLoadError):
        load_dataset(tmp_path / "missing.jsonl")


def test_load_manifest_resolves_relative_paths(tmp_path, mini_dataset, fixtures_dir):
    (tmp_path / "corpus.jsonl").write_text((fixtures_dir / "corpus.jsonl").read_text(encoding="utf-8"), encoding="utf-8")
    path = tmp_path / "manifest.json"
    path.write_text(
        json.dumps({"datasets": ["mini.jsonl"], "corpus": "corpus.jsonl", "output_dir": "out", "agent": {"max_search_calls": 4}}),
        encoding="utf-8",
    )
    manifest = load_manifest(path)
    assert manifest.datasets == [mini_dataset.resolve()]
    assert manifest.corpus == (tmp_path / "corpus.jsonl").resolve()
    assert manifest.output_dir == (tmp_path / "out").resolve()
    assert manifest.agent.max_search_calls == 4


@pytest.mark.parametrize(
    "content",
    ["{not json", "[]", json.dumps({"datasets": ["nowhere.jsonl"], "output_dir": "out"})],
    ids=["bad-json", "not-object", "missing-file"],
)
def test_load_manifest_errors(tmp_path, content):
    path = tmp_path / "manifest.json"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ManifestError):
        load_manifest(path)


@pytest.mark.anyio
async def test_evaluate_metrics(mini_manifest):
    report = await evaluate(mini_manifest, mini_factory, clock=fixed_clock)

    (aggregate,) = report.aggregates
    assert aggregate.dataset == "mini"
    assert aggregate.count == 2
    assert percent(aggregate.f1) == "90.0"
    assert percent(aggregate.cem) == "100.0"
    assert percent(aggregate.em) == "50.0"
    assert [row.answer for row in report.rows] == ["Skeleton Crew", "playwright Dominique Morisseau"]
    assert not report.incomplete
    assert report.metadata["started_at"] == "2025-01-01T12:00:00+00:00"


@pytest.mark.anyio
async def test_evaluate_worked_example(crew_manifest):
    report = await evaluate(crew_manifest, clock=fixed_clock)

    (row,) = report.rows
    assert row.id == "frames-crew"
    assert row.dataset == "gold_crew"
    assert row.answer == "Skeleton Crew"
    assert (row.f1, row.cem, row.em) == (1.0, 1.0, 1.0)
    assert row.t == 3
    assert row.termination == Termination.ANSWERED.value
    assert row.r_overall == 1.5

    output = crew_manifest.output_dir
    dumped = [json.loads(line) for line in (output / "trajectories.jsonl").read_text(encoding="utf-8").splitlines()]
    assert len(dumped) == 1
    assert dumped[0]["t"] == 3
    assert [segment["kind"] for segment in dumped[0]["segments"]] == ["think", "search", "result"] * 3 + ["think", "answer"]

    # One zero span per injected <result> block
    (score,) = [json.loads(line) for line in (output / "scores.jsonl").read_text(encoding="utf-8").splitlines()]
    assert score["r_overall"] == 1.5
    assert len(score["loss_mask"]["zero_spans"]) == 3


@pytest.mark.anyio
async def test_evaluate_writes_identical_reports(crew_manifest):
    await evaluate(crew_manifest, clock=fixed_clock)
    first = (crew_manifest.output_dir / "report.json").read_bytes()
    first_dump = (crew_manifest.output_dir / "trajectories.jsonl").read_bytes()
    await evaluate(crew_manifest, clock=fixed_clock)
    assert (crew_manifest.output_dir / "report.json").read_bytes() == first
    assert (crew_manifest.output_dir / "trajectories.jsonl").read_bytes() == first_dump


@pytest.mark.anyio
async def test_manifest_timestamp_pins_the_report(crew_manifest):
    pinned = crew_manifest.model_copy(update={"timestamp": fixed_clock()})
    report = await evaluate(pinned)
    first = (pinned.output_dir / "report.json").read_bytes()
    await evaluate(pinned)
    assert (pinned.output_dir / "report.json").read_bytes() == first
    assert report.metadata["started_at"] == report.metadata["finished_at"] == "2025-01-01T12:00:00+00:00"


@pytest.mark.anyio
async def test_outcome_only_reward_mode_in_a_run(crew_manifest):
    orm = crew_manifest.model_copy(update={"reward": RewardConfig(mode="orm")})
    report = await evaluate(orm, clock=fixed_clock)
    assert report.rows[0].r_overall == 1.0
    (score,) = [json.loads(line) for line in (orm.output_dir / "scores.jsonl").read_text(encoding="utf-8").splitlines()]
    assert score["r_gain"] == 0.5


@pytest.mark.anyio
async def test_evaluate_reports_failed_questions(mini_manifest):
    def factory(record, index):
        return ScriptedLlm([] if record.id == "b" else MINI_SCRIPTS["a"])

    report = await evaluate(mini_manifest, factory, clock=fixed_clock)
    assert [row.id for row in report.rows] == ["a"]
    assert [error.id for error in report.errors] == ["b"]
    assert report.incomplete


@pytest.mark.anyio
async def test_evaluate_groups_use_rollout_zero(mini_manifest):
    manifest = mini_manifest.model_copy(update={"rollouts_per_question": 3})
    report = await evaluate(manifest, mini_factory, clock=fixed_clock)
    assert len(report.rows) == 2
    lines = (manifest.output_dir / "scores.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 6
    assert [json.loads(line)["rollout"] for line in lines[:3]] == [0, 1, 2]


@pytest.mark.anyio
async def test_offline_scoring_reproduces_run(crew_manifest, fixtures_dir):
    report = await evaluate(crew_manifest, clock=fixed_clock)
    output = crew_manifest.output_dir

    offline, lines = score_offline(output / "trajectories.jsonl", fixtures_dir / "gold_crew.jsonl")
    assert offline.aggregates == report.aggregates
    assert offline.rows == report.rows
    written = [json.loads(line) for line in (output / "scores.jsonl").read_text(encoding="utf-8").splitlines()]
    assert lines == written


def test_offline_scoring_unknown_id(tmp_path, fixtures_dir):
    dump = tmp_path / "trajectories.jsonl"
    record = {"id": "nobody", "question": "?", "segments": [], "t": 0}
    dump.write_text(json.dumps(record) + "\n", encoding="utf-8")
    report, lines = score_offline(dump, fixtures_dir / "gold_crew.jsonl", scores_path=tmp_path / "scores.jsonl")
    assert report.rows == []
    assert lines == []
    assert [error.id for error in report.errors] == ["nobody"]


def test_offline_scoring_empty_dump(tmp_path, fixtures_dir):
    dump = tmp_path / "trajectories.jsonl"
    dump.write_text("", encoding="utf-8")
    report, lines = score_offline(dump, fixtures_dir / "gold_crew.jsonl")
    assert report == EvalReport()
    assert lines == []


def sample_report() -> EvalReport:
    rows = [
        QuestionRow(dataset="hotpotqa", id="1", answer="Skeleton Crew", f1=0.5866, cem=1.0, em=0.0, t=3, termination="answered", r_overall=1.2),
        QuestionRow(dataset="hotpotqa", id="2", answer="", f1=0.0, cem=0.0, em=0.0, t=8, termination="budget_exhausted"),
        QuestionRow(dataset="musique", id="3", answer="Natalie Diaz", f1=1.0, cem=1.0, em=1.0, t=2, termination="answered", r_overall=1.5),
    ]
    return EvalReport(aggregates=aggregate_rows(rows), rows=rows)


def test_percent_formatting():
    assert percent(0.5866) == "58.7"
    assert percent(1.0) == "100.0"
    assert percent(0.0) == "0.0"


def test_aggregate_rows_per_dataset():
    aggregates = sample_report().aggregates
    assert [item.dataset for item in aggregates] == ["hotpotqa", "musique"]
    assert aggregates[0] == DatasetAggregate(dataset="hotpotqa", count=2, f1=0.2933, cem=0.5, em=0.0)


@given(
    st.lists(
        st.tuples(
            st.sampled_from(["hotpotqa", "musique", "2wiki"]),
            st.floats(0.0, 1.0),
            st.sampled_from([0.0, 1.0]),
            st.sampled_from([0.0, 1.0]),
        ),
        min_size=1,
        max_size=12,
    ),
    st.randoms(use_true_random=False),
)
def test_aggregates_do_not_depend_on_row_order(values, rng):
    rows = [
        QuestionRow(dataset=dataset, id=str(number), answer="", f1=f1, cem=cem, em=em, t=0, termination="answered")
        for number, (dataset, f1, cem, em) in enumerate(values)
    ]
    shuffled = list(rows)
    rng.shuffle(shuffled)

    def by_dataset(items):
        return {item.dataset: item for item in aggregate_rows(items)}

    assert by_dataset(shuffled) == by_dataset(rows)


def test_render_table():
    text = report_render(sample_report(), "table")
    assert "Metrics (%)" in text
    assert "29.3" in text
    assert "Average" in text
    assert "budget_exhausted" in text
    (metrics_row,) = [line for line in text.splitlines() if "scored" in line]
    # One row per run: hotpotqa F1/CEM/EM, musique F1/CEM/EM, then the averages
    assert metrics_row.split()[1::2][:10] == ["scored", "29.3", "50.0", "0.0", "100.0", "100.0", "100.0", "64.7", "75.0", "50.0"]
    assert text == report_render(sample_report(), "table")


def test_render_table_without_rows():
    text = report_render(EvalReport(), "table")
    assert "Method" in text
    assert "Dataset" in text and "F1" in text
    assert "Average" not in text


def test_render_csv_rows_only():
    text = report_render(sample_report(), "csv")
    lines = text.splitlines()
    assert lines[0] == "dataset,id,answer,f1,cem,em,t,termination,r_overall"
    assert len(lines) == 4
    assert lines[2].endswith(",budget_exhausted,")


def test_json_csv_json_keeps_numbers():
    report = sample_report()
    rebuilt = report_from_csv(report_render(report, "csv"))
    assert rebuilt.rows == report.rows
    assert rebuilt.aggregates == report.aggregates


def test_load_report_json_and_csv(tmp_path):
    report = sample_report()
    as_json = tmp_path / "report.json"
    as_json.write_text(report_render(report, "json"), encoding="utf-8")
    as_csv = tmp_path / "rows.csv"
    as_csv.write_text(report_render(report, "csv"), encoding="utf-8")
    assert load_report(as_json) == report
    assert load_report(as_csv).rows == report.rows
    broken = tmp_path / "broken.json"
    broken.write_text("{}", encoding="utf-8")
    assert load_report(broken) == EvalReport()
    with pytest.raises(DatasetLoadError):
        load_report(tmp_path / "missing.json")
