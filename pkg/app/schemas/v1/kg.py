"""
Pydantic schemas for the KG service HTTP contract.

`POST /kg/search` accepts `{"entity": [...], "relation": [...]}` and returns
`{"triples": [{"head", "relation", "tail", "rendered", "score"}]}`.
"""

from pydantic import BaseModel, Field


class KgSearchRequestModel(BaseModel):
    """
    Schema for a KG search request.

    Field names mirror the `entity`/`relation` keys of a `<search>` payload so a model's
    request can be forwarded as-is.
    """

    entity: list[str] = Field(min_length=1)        # Entity surface strings
    relation: list[str] = Field(default_factory=list)  # Relation surface strings (ranking only)
    max_triples: int = Field(default=100, ge=1)
    max_tokens: int = Field(default=1024, ge=1)


class KgTripleModel(BaseModel):
    """One ranked triple as returned to clients."""

    head: str
    relation: str
    tail: str
    rendered: str
    score: int


class KgSearchResponseModel(BaseModel):
    triples: list[KgTripleModel]