"""
Pydantic schemas for reward computation: constants, gold records, retrieval logs and the
full breakdown of every intermediate reward term.
"""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class RewardConfig(BaseModel):
    """
    Reward constants.

    Fields:
        n (int): Length multiple choosing between F1 and CEM for the answer reward.
        alpha (float): Scale of the gain reward.
        gamma (float): Decay factor of the retrieval penalty, in (0, 1].
        beta (float): Lower bound of the retrieval penalty.
        mode (str): `multi` sums accuracy and information gain; `orm` (outcome-only)
            scores accuracy alone. Gain terms are still computed and reported in both modes.
    """

    model_config = ConfigDict(frozen=True)

    mode: Literal["orm", "multi"] = "multi"
    n: int = Field(default=3, ge=1)
    alpha: float = Field(default=0.5, ge=0)
    gamma: float = Field(default=0.9, gt=0, le=1)
    beta: float = Field(default=-0.2, le=0)


class GoldRecord(BaseModel):
    """One multi-hop QA instance from the gold JSONL."""

    model_config = ConfigDict(frozen=True)

    id: str = Field(min_length=1)
    question: str
    answers: list[str] = Field(min_length=1)
    supporting_titles: list[str] = Field(default_factory=list)
    hops: int = Field(ge=1)


class RetrievalStep(BaseModel):
    """Titles retrieved by one Search segment, with optional provider scores."""

    titles: list[str] = Field(default_factory=list)
    scores: list[float] | None = None


class RetrievalLog(BaseModel):
    """One step per Search segment of the scored trajectory."""

    steps: list[RetrievalStep] = Field(default_factory=list)

    @classmethod
    def from_titles(cls, titles: list[list[str]]) -> "RetrievalLog":
        return cls(steps=[RetrievalStep(titles=step) for step in titles])

    def titles(self) -> list[list[str]]:
        return [list(step.titles) for step in self.steps]


class RewardBreakdown(BaseModel):
    """
    All reward terms of one trajectory.

    `r_outcome` is identified with `r_acc`, so `r_overall = r_acc + r_gain`.
    """

    format_ok: bool
    answer: str | None = None
    r_ans: float
    r_acc: float
    r_recall: float
    r_penalty: float
    r_gain: float
    r_overall: float
    recall_per_step: list[float] = Field(default_factory=list)
    format_issues: list[str] = Field(default_factory=list)
