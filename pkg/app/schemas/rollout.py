"""
Pydantic schemas for the agentic rollout loop: agent settings, LLM endpoint settings and
rollout results.
"""

from enum import Enum
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, SecretStr, model_validator

from app.schemas.protocol import Trajectory
from app.schemas.reward import RetrievalLog


class SearchMode(str, Enum):
    """Which tools and filters `execute_search` uses."""

    DOC = "doc"                      # documents only
    DOC_KG = "doc_kg"                # documents + KG triples
    DOC_KG_FILTER = "doc_kg_filter"  # documents + KG, both filtered


class AgentConfig(BaseModel):
    """
    Rollout settings.

    Fields:
        max_search_calls (int): Search segments allowed before the forced answer turn.
        max_response_units (int): Generation budget (tokens) for the whole rollout.
        temperature (float): Sampling temperature.
        top_p (float): Nucleus sampling mass, in (0, 1].
        doc_top_k (int): Documents retrieved per search.
        kg_filter_limit (int): Triples kept by the KG filter.
        kg_max_triples (int): Triples returned by `kg_search` before filtering.
        kg_max_tokens (int): Token budget of the KG retrieval result.
        stop_sequences (list[str]): Sequences that pause generation.
        search_mode (SearchMode): Tools and filters in use.
        prompt_variant (str): `kg` (entity/relation search) or `doc` system prompt.
    """

    model_config = ConfigDict(frozen=True)

    max_search_calls: int = Field(default=8, ge=1)
    max_response_units: int = Field(default=8192, ge=1)
    temperature: float = Field(default=1.0, ge=0)
    top_p: float = Field(default=0.95, gt=0, le=1)
    doc_top_k: int = Field(default=5, ge=1)
    kg_filter_limit: int = Field(default=5, ge=1)
    kg_max_triples: int = Field(default=100, ge=1)
    kg_max_tokens: int = Field(default=1024, ge=1)
    stop_sequences: list[str] = Field(default_factory=lambda: ["</search>", "</answer>"])
    search_mode: SearchMode = SearchMode.DOC_KG_FILTER
    prompt_variant: Literal["kg", "doc"] = "kg"


class LlmConfig(BaseModel):
    """
    How to reach a language model.

    `http` talks to a chat-completions endpoint (unset fields fall back to `Config`);
    `scripted` replays chunks from a JSON file mapping question id to a list of chunks.
    """

    kind: Literal["http", "scripted"] = "http"
    base_url: str | None = None
    model: str | None = None
    api_key: SecretStr | None = None
    timeout: float | None = Field(default=None, gt=0)
    max_retries: int | None = Field(default=None, ge=1)
    script: Path | None = None

    @model_validator(mode="after")
    def _script_for_scripted(self) -> "LlmConfig":
        if self.kind == "scripted" and self.script is None:
            raise ValueError("scripted LLM requires a script path")
        return self


class Termination(str, Enum):
    """Why a rollout stopped."""

    ANSWERED = "answered"
    BUDGET_EXHAUSTED = "budget_exhausted"
    PROTOCOL_ERROR = "protocol_error"
    LLM_ERROR = "llm_error"


class RolloutResult(BaseModel):
    """
    Outcome of one rollout.

    Fields:
        index (int): Rollout index within its group.
        question (str): Question the rollout answered.
        trajectory (Trajectory): Parsed assistant text; always protocol-valid.
        retrieval_log (RetrievalLog): One step per Search segment.
        termination (Termination): Stop reason.
        wall_time (float): Seconds spent.
        discarded (str): Generated text that was not committed to the trajectory.
        error (str | None): Diagnostic for non-answered terminations.
    """

    index: int = 0
    question: str = ""
    trajectory: Trajectory
    retrieval_log: RetrievalLog = Field(default_factory=RetrievalLog)
    termination: Termination
    wall_time: float = 0.0
    discarded: str = ""
    error: str | None = None
