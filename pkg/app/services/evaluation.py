"""
Evaluation harness.

Purpose:
- Load gold datasets and run manifests.
- `evaluate`: run rollouts for every question, score them and write `report.json`,
  `trajectories.jsonl` and `scores.jsonl`.
- `score_offline`: score a trajectory dump without any model calls, emitting reward
  breakdowns and loss masks.
- Render reports as a rich table, JSON or CSV.

`evaluate` and `score_offline` share `score_records`, so re-scoring a run's own dump
reproduces its aggregates exactly.

Impact on SDLC:
- A manifest names every input of a run, so a report can be regenerated from it alone.
- Aggregates are order-independent means, so shuffling a dataset never moves a score.
"""

import asyncio

# CSV and JSON report rendering
import csv
import json
import logging
from collections.abc import Callable, Iterable

# Report timestamps
from datetime import datetime, timezone
from io import StringIO
from pathlib import Path
from typing import Any, Literal

# Validation of gold rows, manifests and dumps
from pydantic import ValidationError

# Terminal tables
from rich.console import Console
from rich.table import Table

# Load and manifest errors reported by the CLI
from app.core.exceptions import BoxedAnswerError, DatasetLoadError, ManifestError

# Report, row and dump schemas
from app.schemas.evaluation import (
    DatasetAggregate,
    EvalReport,
    QuestionRow,
    ReportError,
    RunManifest,
    SegmentRecord,
    TrajectoryRecord,
)
from app.schemas.reward import GoldRecord, RetrievalLog, RewardConfig
from app.schemas.rollout import RolloutResult, Termination

# Services wired together by a run
from app.services.doc_retrieval import build_provider, load_corpus
from app.services.kg_engine import KgEngine, load_store
from app.services.llm import LlmClient, build_llm
from app.services.orchestrator import SearchTools, run_group
from app.services.protocol import compute_loss_mask, extract_boxed_answer
from app.services.rewards import best_over_golds, cem, em, f1_score, mean, score_trajectory
from app.utils.helpers import read_jsonl, write_jsonl

logger = logging.getLogger(__name__)

ReportFormat = Literal["table", "json", "csv"]
LlmFactory = Callable[[GoldRecord, int], LlmClient]
Clock = Callable[[], datetime]

AVERAGE_LABEL = "Average"
_CSV_FIELDS = list(QuestionRow.model_fields)


def load_dataset(path: str | Path, errors: list[ReportError] | None = None) -> list[GoldRecord]:
    """
    Read a gold JSONL file, skipping malformed lines.

    Args:
        path (str | Path): File of `{"id", "question", "answers", "supporting_titles", "hops"}` lines.
        errors (list[ReportError] | None): Receives one entry per rejected line.

    Returns:
        list[GoldRecord]: Valid records in file order.

    Raises:
        DatasetLoadError: The file yields no valid record.
    """
    path = Path(path)
    records = []
    try:
        for number, line in read_jsonl(path):
            try:
                records.append(GoldRecord.model_validate_json(line))
            except ValidationError as exc:
                reason = "; ".join(f"{'.'.join(map(str, item['loc'])) or 'line'}: {item['msg']}" for item in exc.errors())
                logger.warning("%s:%d rejected: %s", path, number, reason)
                if errors is not None:
                    errors.append(ReportError(id=f"{path.name}:{number}", reason=reason))
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetLoadError(f"cannot read {path}: {exc}") from exc
    if not records:
        raise DatasetLoadError(f"{path} has no valid gold records")
    return records


def _resolve(base: Path, value: Any) -> Any:
    if isinstance(value, str):
        candidate = Path(value).expanduser()
        return str(candidate if candidate.is_absolute() else base / candidate)
    if isinstance(value, list):
        return [_resolve(base, item) for item in value]
    return value


def load_manifest(path: str | Path) -> RunManifest:
    """
    Read and validate a JSON run manifest; relative paths are taken from its directory.

    Raises:
        ManifestError: Unreadable file, invalid JSON or a failed validation.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ManifestError(f"manifest {path} must be a JSON object")

    base = path.resolve().parent
    for key in ("datasets", "corpus", "output_dir"):
        if key in raw:
            raw[key] = _resolve(base, raw[key])
    if isinstance(raw.get("kg"), dict):
        for key in ("triples", "entity_aliases", "relation_aliases"):
            if key in raw["kg"]:
                raw["kg"][key] = _resolve(base, raw["kg"][key])
    for key in ("llm", "filter_llm"):
        if isinstance(raw.get(key), dict) and "script" in raw[key]:
            raw[key]["script"] = _resolve(base, raw[key]["script"])

    try:
        return RunManifest.model_validate(raw)
    except ValidationError as exc:
        raise ManifestError(f"invalid manifest {path}: {exc}") from exc


def _boxed_or_full(text: str) -> str:
    try:
        return extract_boxed_answer(text)
    except BoxedAnswerError:
        return text.strip()


def to_record(result: RolloutResult, record_id: str, dataset: str) -> TrajectoryRecord:
    """Dump line of one rollout."""
    trajectory = result.trajectory
    answer = trajectory.answer
    return TrajectoryRecord(
        id=record_id,
        question=result.question,
        segments=[SegmentRecord(kind=item.kind, text=item.text, leading=item.leading) for item in trajectory.segments],
        t=trajectory.retrieval_count,
        answer=_boxed_or_full(answer.text) if answer is not None else None,
        dataset=dataset,
        rollout=result.index,
        termination=result.termination.value,
        retrieval_log=result.retrieval_log.titles(),
        trailing=trajectory.trailing,
        stray=trajectory.stray,
        error=result.error,
    )


def aggregate_rows(rows: Iterable[QuestionRow]) -> list[DatasetAggregate]:
    """Mean F1/CEM/EM per dataset, datasets in order of first appearance."""
    groups: dict[str, list[QuestionRow]] = {}
    for row in rows:
        groups.setdefault(row.dataset, []).append(row)
    return [
        DatasetAggregate(
            dataset=name,
            count=len(group),
            f1=mean(row.f1 for row in group),
            cem=mean(row.cem for row in group),
            em=mean(row.em for row in group),
        )
        for name, group in groups.items()
    ]


def score_records(
    records: Iterable[TrajectoryRecord],
    gold_for: Callable[[TrajectoryRecord], GoldRecord | None],
    config: RewardConfig,
) -> tuple[list[QuestionRow], list[dict[str, Any]], list[ReportError]]:
    """
    Score dumped rollouts.

    Every rollout gets a score line (reward breakdown plus loss mask). Rollout 0 of each
    question becomes a report row, unless its model call failed, which is reported as an error.

    Returns:
        tuple: Report rows, score lines and errors.
    """
    rows: list[QuestionRow] = []
    lines: list[dict[str, Any]] = []
    errors: list[ReportError] = []
    for record in records:
        gold = gold_for(record)
        if gold is None:
            errors.append(ReportError(id=record.id, reason="no gold record with this id"))
            continue

        trajectory = record.to_trajectory()
        breakdown = score_trajectory(trajectory, gold, RetrievalLog.from_titles(record.retrieval_log), config)
        mask = compute_loss_mask(trajectory)
        lines.append(
            {
                "id": record.id,
                "dataset": record.dataset,
                "rollout": record.rollout,
                "termination": record.termination,
                **breakdown.model_dump(mode="json"),
                "loss_mask": {
                    "unit": mask.unit,
                    "length": len(mask.flags),
                    "zero_spans": [list(run) for run in mask.zero_runs()],
                },
            }
        )

        # Only rollout 0 of each question is reported
        if record.rollout != 0:
            continue
        if record.termination == Termination.LLM_ERROR.value:
            errors.append(ReportError(id=record.id, reason=record.error or "llm_error"))
            continue
        answer = breakdown.answer or ""
        rows.append(
            QuestionRow(
                dataset=record.dataset,
                id=record.id,
                answer=answer,
                f1=best_over_golds(f1_score, answer, gold.answers),
                cem=best_over_golds(cem, answer, gold.answers),
                em=best_over_golds(em, answer, gold.answers),
                t=trajectory.retrieval_count,
                termination=record.termination or "",
                r_overall=breakdown.r_overall,
            )
        )
    return rows, lines, errors


def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


async def evaluate(
    manifest: RunManifest,
    llm_factory: LlmFactory | None = None,
    clock: Clock | None = None,
) -> EvalReport:
    """
    Run, score and report every question of the manifest's datasets.

    Args:
        manifest (RunManifest): Validated run description.
        llm_factory (LlmFactory | None): Builds the policy client of (question, rollout);
            defaults to `build_llm(manifest.llm, question id)`.
        clock (Clock | None): Source of the report timestamps; defaults to the manifest's
            pinned `timestamp`, then to the wall clock.

    Returns:
        EvalReport: Also written to `output_dir/report.json`, next to
        `trajectories.jsonl` and `scores.jsonl`. Flagged incomplete when a question's
        model calls failed.
    """
    if clock is None:
        pinned = manifest.timestamp
        clock = (lambda: pinned) if pinned is not None else _utc_now
    started_at = clock()
    load_errors: list[ReportError] = []
    datasets = [(path.stem, load_dataset(path, load_errors)) for path in manifest.datasets]

    # Retrieval environment shared by every question
    corpus = load_corpus(manifest.corpus) if manifest.corpus is not None else None
    provider = build_provider(manifest.provider, corpus)
    engine = None
    if manifest.kg is not None:
        store = load_store(
            manifest.kg.triples, manifest.kg.entity_aliases, manifest.kg.relation_aliases, manifest.kg.missing_alias
        )
        engine = KgEngine(store)

    factory = llm_factory or (lambda record, index: build_llm(manifest.llm, record.id))

    def filter_llm_for(record: GoldRecord) -> LlmClient | None:
        if manifest.filter_llm is not None:
            return build_llm(manifest.filter_llm, record.id)
        if manifest.llm.kind == "http":
            return build_llm(manifest.llm, record.id)
        return None

    # At most `parallelism` questions in flight
    semaphore = asyncio.Semaphore(manifest.parallelism)

    async def run_question(dataset: str, record: GoldRecord) -> list[TrajectoryRecord]:
        async with semaphore:
            tools = SearchTools(provider, engine, filter_llm_for(record))
            results = await run_group(
                record.question,
                manifest.rollouts_per_question,
                lambda index: factory(record, index),
                tools,
                manifest.agent,
                seed=manifest.seed,
            )
        logger.info("Finished %s/%s (%s)", dataset, record.id, ", ".join(result.termination.value for result in results))
        return sorted((to_record(result, record.id, dataset) for result in results), key=lambda item: item.rollout)

    batches = await asyncio.gather(*(run_question(name, record) for name, records in datasets for record in records))
    dumped = [record for batch in batches for record in batch]

    # Score the dump exactly as `score_offline` would
    golds = {(name, record.id): record for name, records in datasets for record in records}
    rows, lines, score_errors = score_records(dumped, lambda item: golds.get((item.dataset, item.id)), manifest.reward)

    report = EvalReport(
        aggregates=aggregate_rows(rows),
        rows=rows,
        metadata={
            "started_at": started_at.isoformat(),
            "finished_at": clock().isoformat(),
            "provider": manifest.provider.kind.value,
            "search_mode": manifest.agent.search_mode.value,
            "rollouts_per_question": manifest.rollouts_per_question,
            "seed": manifest.seed,
            "config": manifest.model_dump(mode="json"),
        },
        errors=load_errors + score_errors,
        incomplete=bool(score_errors),
    )

    # Persist the dump, the score lines and the report side by side
    manifest.output_dir.mkdir(parents=True, exist_ok=True)
    write_jsonl(manifest.output_dir / "trajectories.jsonl", (record.model_dump(mode="json") for record in dumped))
    write_jsonl(manifest.output_dir / "scores.jsonl", lines)
    (manifest.output_dir / "report.json").write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote report for %d question(s) to %s", len(rows), manifest.output_dir)
    return report


def load_trajectories(path: str | Path, errors: list[ReportError] | None = None) -> list[TrajectoryRecord]:
    records = []
    for number, line in read_jsonl(path):
        try:
            records.append(TrajectoryRecord.model_validate_json(line))
        except ValidationError as exc:
            logger.warning("%s:%d rejected: %s", path, number, exc.errors()[0]["msg"])
            if errors is not None:
                errors.append(ReportError(id=f"{Path(path).name}:{number}", reason="invalid trajectory record"))
    return records


def score_offline(
    trajectories_path: str | Path,
    gold_path: str | Path,
    config: RewardConfig | None = None,
    scores_path: str | Path | None = None,
) -> tuple[EvalReport, list[dict[str, Any]]]:
    """
    Score a trajectory dump against a gold file without calling any model.

    Args:
        trajectories_path: `trajectories.jsonl` written by `evaluate` (or a trainer).
        gold_path: Gold JSONL; records are matched by id.
        config: Reward constants; defaults when omitted.
        scores_path: Where to write the score lines, if anywhere.

    Returns:
        tuple[EvalReport, list[dict]]: The report (empty when the dump is) and the score lines.
        Unknown ids are listed in the report's errors; the rest is still scored.
    """
    errors: list[ReportError] = []
    records = load_trajectories(trajectories_path, errors)
    if not records:
        return EvalReport(errors=errors), []

    golds = {record.id: record for record in load_dataset(gold_path, errors)}
    rows, lines, score_errors = score_records(records, lambda item: golds.get(item.id), config or RewardConfig())
    for row in rows:
        if not row.dataset:
            row.dataset = Path(gold_path).stem
    if scores_path is not None:
        write_jsonl(scores_path, lines)
    report = EvalReport(
        aggregates=aggregate_rows(rows),
        rows=rows,
        metadata={"trajectories": str(trajectories_path), "gold": str(gold_path)},
        errors=errors + score_errors,
    )
    return report, lines


def percent(value: float) -> str:
    return f"{value * 100:.1f}"


def _method_label(report: EvalReport) -> str:
    """Row label of the metrics table: the run's search mode, or `scored` for offline reports."""
    mode = report.metadata.get("search_mode")
    return mode if isinstance(mode, str) else "scored"


def _render_table(report: EvalReport) -> str:
    console = Console(file=StringIO(), width=120, color_system=None, force_terminal=False)

    # Datasets are column groups (F1 / CEM / EM each), the run is one row
    summary = Table(title="Metrics (%)")
    summary.add_column("Method")
    cells = [_method_label(report)]
    for item in report.aggregates:
        for metric, value in (("F1", item.f1), ("CEM", item.cem), ("EM", item.em)):
            summary.add_column(f"{item.dataset}\n{metric}", justify="right")
            cells.append(percent(value))
    if report.aggregates:
        for metric in ("f1", "cem", "em"):
            summary.add_column(f"{AVERAGE_LABEL}\n{metric.upper()}", justify="right")
            cells.append(percent(mean(getattr(item, metric) for item in report.aggregates)))
        summary.add_row(*cells)
    console.print(summary)

    questions = Table(title="Questions")
    for column in ("Dataset", "ID", "Answer", "F1", "CEM", "EM", "t", "Termination"):
        questions.add_column(column)
    for row in report.rows:
        questions.add_row(
            row.dataset, row.id, row.answer, percent(row.f1), percent(row.cem), percent(row.em), str(row.t), row.termination
        )
    console.print(questions)

    if report.errors:
        console.print(f"{len(report.errors)} error(s):")
        for error in report.errors:
            console.print(f"  {error.id}: {error.reason}", markup=False)
    if report.incomplete:
        console.print("Report is incomplete.")
    return console.file.getvalue()


def _render_csv(report: EvalReport) -> str:
    buffer = StringIO()
    writer = csv.DictWriter(buffer, fieldnames=_CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in report.rows:
        writer.writerow(row.model_dump())
    return buffer.getvalue()


def report_render(report: EvalReport, fmt: ReportFormat = "table") -> str:
    """
    Render a report deterministically.

    `table` prints per-dataset F1/CEM/EM percentages (plus an average row) and the
    per-question rows; `json` is the full report; `csv` holds the per-question rows only.
    """
    if fmt == "json":
        return report.model_dump_json(indent=2) + "\n"
    if fmt == "csv":
        return _render_csv(report)
    return _render_table(report)


def report_from_csv(text: str) -> EvalReport:
    """Rebuild a report from CSV rows; aggregates are recomputed."""
    rows = []
    for item in csv.DictReader(StringIO(text)):
        if item.get("r_overall") == "":
            item["r_overall"] = None
        rows.append(QuestionRow.model_validate(item))
    return EvalReport(aggregates=aggregate_rows(rows), rows=rows)


def load_report(path: str | Path) -> EvalReport:
    """Read a report written as JSON (`.json`) or CSV (`.csv`)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetLoadError(f"cannot read report {path}: {exc}") from exc
    if path.suffix.lower() == ".csv":
        return report_from_csv(text)
    try:
        return EvalReport.model_validate_json(text)
    except ValidationError as exc:
        raise DatasetLoadError(f"{path} is not a valid report: {exc.errors()[0]['msg']}") from exc
