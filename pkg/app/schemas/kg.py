"""
Pydantic schemas for the knowledge-graph engine.

Triples are plain named tuples: a store holds millions of them and they must hash, sort
and compare by (head, relation, tail). Query and result types are pydantic models.
"""

from typing import NamedTuple

from pydantic import BaseModel, ConfigDict, Field

# Opaque Wikidata-style identifiers, e.g. "Q123" and "P57"
EntityId = str
RelationId = str


class Triple(NamedTuple):
    """One (head, relation, tail) fact; tuple order is the canonical sort order."""

    head: EntityId
    relation: RelationId
    tail: EntityId


class KgQuery(BaseModel):
    """
    Entity/relation query issued from the `entity` and `relation` lists of a search request.

    At least one entity string is required; relations only influence ranking.
    """

    model_config = ConfigDict(frozen=True)

    entities: list[str] = Field(min_length=1)
    relations: list[str] = Field(default_factory=list)


class ScoredTriple(BaseModel):
    """A candidate triple with its rendered canonical form and shared-word score."""

    model_config = ConfigDict(frozen=True)

    triple: Triple
    rendered: str             # "head_name | relation_name | tail_name"
    score: int = Field(ge=0)  # distinct normalized tokens shared with the query


class StoreStats(BaseModel):
    """Sizes of a loaded knowledge store."""

    triples: int
    entities: int
    relations: int
