"""
Pydantic schemas for the rollout protocol.

A trajectory is the assistant side of a rollout: `<think>`, `<search>`, `<result>` and
`<answer>` segments in order. Segment spans are character offsets into the serialized
trajectory; the loss mask is expressed over UTF-8 bytes.
"""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, computed_field


class SegmentKind(str, Enum):
    """Delimiter pair a segment is enclosed in; the value is the tag name."""

    THINK = "think"
    SEARCH = "search"
    RESULT = "result"
    ANSWER = "answer"

    @property
    def open_tag(self) -> str:
        return f"<{self.value}>"

    @property
    def close_tag(self) -> str:
        return f"</{self.value}>"


class Segment(BaseModel):
    """
    One delimited segment.

    Fields:
        kind (SegmentKind): Delimiter pair.
        text (str): Content between the delimiters, verbatim.
        span (tuple[int, int]): [start, end) of the whole `<tag>...</tag>` in the serialized text.
        leading (str): Whitespace between the previous segment (or start) and this one.
    """

    model_config = ConfigDict(frozen=True)

    kind: SegmentKind
    text: str
    span: tuple[int, int] = (0, 0)
    leading: str = ""


class StrayText(BaseModel):
    """Non-whitespace text found outside any delimiter pair."""

    model_config = ConfigDict(frozen=True)

    text: str
    offset: int


class Trajectory(BaseModel):
    """
    Ordered segments of one rollout.

    `retrieval_count` (t) is derived from the segments, so it can never disagree with them.
    """

    segments: list[Segment] = Field(default_factory=list)
    stray: list[StrayText] = Field(default_factory=list)
    trailing: str = ""

    @computed_field
    @property
    def retrieval_count(self) -> int:
        return sum(1 for segment in self.segments if segment.kind is SegmentKind.SEARCH)

    @property
    def answer(self) -> Segment | None:
        """The Answer segment, if the rollout produced one (always the last segment)."""
        if self.segments and self.segments[-1].kind is SegmentKind.ANSWER:
            return self.segments[-1]
        return None

    def of_kind(self, kind: SegmentKind) -> list[Segment]:
        return [segment for segment in self.segments if segment.kind is kind]


class SearchRequest(BaseModel):
    """Payload of a `<search>` block: free-text subquery plus KG entities and relations."""

    model_config = ConfigDict(frozen=True)

    query: str = Field(min_length=1)
    entity: list[str] = Field(default_factory=list)
    relation: list[str] = Field(default_factory=list)


class LossMask(BaseModel):
    """
    Per-unit training-loss flags: 0 over environment-injected Result spans, 1 elsewhere.

    The default unit is one UTF-8 byte of the serialized trajectory.
    """

    unit: str = "byte"
    flags: list[int] = Field(default_factory=list)

    def zero_runs(self) -> list[tuple[int, int]]:
        """Maximal [start, end) runs of masked units."""
        runs: list[tuple[int, int]] = []
        start = None
        for position, flag in enumerate(self.flags):
            if flag == 0 and start is None:
                start = position
            elif flag == 1 and start is not None:
                runs.append((start, position))
                start = None
        if start is not None:
            runs.append((start, len(self.flags)))
        return runs
