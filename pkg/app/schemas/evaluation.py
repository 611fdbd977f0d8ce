"""
Pydantic schemas for the evaluation harness: the run manifest, trajectory dump lines,
per-question report rows and the assembled report.
"""

from datetime import datetime
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, Field, model_validator

from app.schemas.document import ProviderConfig, ProviderKind
from app.schemas.protocol import Segment, SegmentKind, StrayText, Trajectory
from app.schemas.reward import RewardConfig
from app.schemas.rollout import AgentConfig, LlmConfig


class KgPaths(BaseModel):
    """Files of the knowledge graph a run loads."""

    triples: list[Path] = Field(min_length=1)
    entity_aliases: Path
    relation_aliases: Path
    missing_alias: Literal["reject", "retain"] = "reject"


class RunManifest(BaseModel):
    """
    Everything `evaluate` needs, as one JSON document.

    Fields:
        datasets (list[Path]): Gold JSONL files; each is reported as its own dataset.
        corpus (Path | None): JSONL corpus, required by the local lexical provider.
        kg (KgPaths | None): Knowledge graph; without it the KG tool returns nothing.
        provider (ProviderConfig): Document provider.
        llm (LlmConfig): Policy model.
        filter_llm (LlmConfig | None): Model behind the doc/KG filters.
        agent (AgentConfig): Rollout settings.
        reward (RewardConfig): Reward constants.
        output_dir (Path): Where report.json, trajectories.jsonl and scores.jsonl go.
        parallelism (int): Questions evaluated concurrently.
        rollouts_per_question (int): Group size G; metrics use rollout 0.
        seed (int): Sampling seed forwarded to the model.
        timestamp (datetime | None): Pins the report timestamps so reruns write identical reports.
    """

    datasets: list[Path] = Field(min_length=1)
    corpus: Path | None = None
    kg: KgPaths | None = None
    provider: ProviderConfig = Field(default_factory=ProviderConfig)
    llm: LlmConfig = Field(default_factory=LlmConfig)
    filter_llm: LlmConfig | None = None
    agent: AgentConfig = Field(default_factory=AgentConfig)
    reward: RewardConfig = Field(default_factory=RewardConfig)
    output_dir: Path
    parallelism: int = Field(default=4, ge=1)
    rollouts_per_question: int = Field(default=1, ge=1)
    seed: int = 0
    timestamp: datetime | None = None

    @model_validator(mode="after")
    def _paths_exist(self) -> "RunManifest":
        required: list[Path] = list(self.datasets)
        if self.corpus is not None:
            required.append(self.corpus)
        if self.kg is not None:
            required.extend([*self.kg.triples, self.kg.entity_aliases, self.kg.relation_aliases])
        for llm in (self.llm, self.filter_llm):
            if llm is not None and llm.script is not None:
                required.append(llm.script)
        missing = [str(path) for path in required if not path.exists()]
        if missing:
            raise ValueError(f"referenced paths do not exist: {', '.join(missing)}")
        if self.provider.kind is ProviderKind.LOCAL_LEXICAL and self.corpus is None:
            raise ValueError("the local-lexical provider requires a corpus")
        return self


class SegmentRecord(BaseModel):
    kind: SegmentKind
    text: str
    leading: str = ""


class TrajectoryRecord(BaseModel):
    """One line of trajectories.jsonl."""

    id: str
    question: str
    segments: list[SegmentRecord]
    t: int
    answer: str | None = None
    dataset: str = ""
    rollout: int = 0
    termination: str | None = None
    retrieval_log: list[list[str]] = Field(default_factory=list)
    trailing: str = ""
    stray: list[StrayText] = Field(default_factory=list)
    error: str | None = None

    def to_trajectory(self) -> Trajectory:
        """Rebuild the dumped trajectory for offline scoring."""
        return Trajectory(
            segments=[Segment(kind=item.kind, text=item.text, leading=item.leading) for item in self.segments],
            stray=list(self.stray),
            trailing=self.trailing,
        )


class QuestionRow(BaseModel):
    """Per-question report row; metric values are fractions in [0, 1]."""

    dataset: str
    id: str
    answer: str
    f1: float
    cem: float
    em: float
    t: int
    termination: str
    r_overall: float | None = None


class DatasetAggregate(BaseModel):
    """Mean metrics of one dataset (fractions; rendered as percentages)."""

    dataset: str
    count: int
    f1: float
    cem: float
    em: float


class ReportError(BaseModel):
    id: str
    reason: str


class EvalReport(BaseModel):
    """Aggregates, per-question rows, run metadata and the error section."""

    aggregates: list[DatasetAggregate] = Field(default_factory=list)
    rows: list[QuestionRow] = Field(default_factory=list)
    metadata: dict[str, Any] = Field(default_factory=dict)
    errors: list[ReportError] = Field(default_factory=list)
    incomplete: bool = False
