"""
Knowledge-graph retrieval engine.

Loads a Wikidata5M-format graph (tab-separated triple files plus entity and relation alias
files) into an immutable `KnowledgeStore` and answers entity/relation queries with ranked
single-hop subgraphs.

Purpose:
- `load_store` merges and deduplicates any number of triple files (e.g. the transductive and
  inductive splits) and builds the matching indexes.
- `KgEngine` composes entity matching, subgraph extraction, shared-word ranking and
  truncation into `search`.

Impact on SDLC:
- The store is never mutated after construction, so one instance serves any number of
  concurrent queries without locking.
- Load errors name the file and line, so a broken dump is fixed at the source.
"""

# Standard logger for load statistics and retained ids
import logging

# Counting shared tokens for the fuzzy matching tier
from collections import Counter

# Typing helpers for the store and engine signatures
from collections.abc import Callable, Iterable, Mapping, Sequence
from itertools import chain
from pathlib import Path

# Read-only views over the alias and index tables
from types import MappingProxyType
from typing import Literal

# Raised on malformed or undecodable graph files
from app.core.exceptions import KnowledgeStoreLoadError

# Triple, query and result schemas
from app.schemas.kg import EntityId, KgQuery, RelationId, ScoredTriple, StoreStats, Triple

# Surface normalization and token counting shared with the lexical index
from app.utils.helpers import normalize_surface, surface_tokens, whitespace_token_count

logger = logging.getLogger(__name__)

MissingAliasPolicy = Literal["reject", "retain"]

DEFAULT_MATCH_LIMIT = 16


class KnowledgeStore:
    """
    Immutable triple store with alias tables and a token index over entity surface forms.

    Attributes:
        triples (tuple[Triple, ...]): Deduplicated triples in (head, relation, tail) order.
        entity_aliases (Mapping[str, tuple[str, ...]]): Entity id -> surface forms, canonical first.
        relation_aliases (Mapping[str, tuple[str, ...]]): Relation id -> surface forms.
    """

    def __init__(
        self,
        triples: Iterable[Triple],
        entity_aliases: Mapping[EntityId, Sequence[str]],
        relation_aliases: Mapping[RelationId, Sequence[str]],
    ):
        self._triples: tuple[Triple, ...] = tuple(sorted({Triple(*triple) for triple in triples}))
        self._entity_aliases = MappingProxyType({key: tuple(value) for key, value in entity_aliases.items()})
        self._relation_aliases = MappingProxyType({key: tuple(value) for key, value in relation_aliases.items()})

        # Positions into self._triples of every triple touching an entity, head or tail
        incident: dict[EntityId, list[int]] = {}
        for position, triple in enumerate(self._triples):
            incident.setdefault(triple.head, []).append(position)
            if triple.tail != triple.head:
                incident.setdefault(triple.tail, []).append(position)
        self._incident = MappingProxyType({key: tuple(value) for key, value in incident.items()})

        # Exact alias table, token index and per-entity alias token runs
        exact: dict[str, set[EntityId]] = {}
        tokens: dict[str, set[EntityId]] = {}
        alias_tokens: dict[EntityId, tuple[tuple[str, ...], ...]] = {}
        for entity_id, surfaces in self._entity_aliases.items():
            sequences = []
            for surface in surfaces:
                normalized = normalize_surface(surface)
                if not normalized:
                    continue
                exact.setdefault(normalized, set()).add(entity_id)
                sequence = tuple(normalized.split())
                sequences.append(sequence)
                for token in sequence:
                    tokens.setdefault(token, set()).add(entity_id)
            alias_tokens[entity_id] = tuple(sequences)
        self._exact = MappingProxyType({key: frozenset(value) for key, value in exact.items()})
        self._token_index = MappingProxyType({key: frozenset(value) for key, value in tokens.items()})
        self._alias_tokens = MappingProxyType(alias_tokens)

    @property
    def triples(self) -> tuple[Triple, ...]:
        return self._triples

    @property
    def entity_aliases(self) -> Mapping[EntityId, tuple[str, ...]]:
        return self._entity_aliases

    @property
    def relation_aliases(self) -> Mapping[RelationId, tuple[str, ...]]:
        return self._relation_aliases

    def stats(self) -> StoreStats:
        return StoreStats(
            triples=len(self._triples),
            entities=len(self._entity_aliases),
            relations=len(self._relation_aliases),
        )

    def exact_ids(self, normalized: str) -> frozenset[EntityId]:
        """Entity ids with an alias whose normalized form equals `normalized`."""
        return self._exact.get(normalized, frozenset())

    def ids_with_token(self, token: str) -> frozenset[EntityId]:
        return self._token_index.get(token, frozenset())

    def alias_token_sequences(self, entity_id: EntityId) -> tuple[tuple[str, ...], ...]:
        return self._alias_tokens.get(entity_id, ())

    def incident_triples(self, entity_id: EntityId) -> tuple[int, ...]:
        return self._incident.get(entity_id, ())

    def triple_at(self, position: int) -> Triple:
        return self._triples[position]

    def render(self, triple: Triple) -> str:
        """Canonical display form "head | relation | tail"."""
        head = self._entity_aliases.get(triple.head, (triple.head,))[0]
        relation = self._relation_aliases.get(triple.relation, (triple.relation,))[0]
        tail = self._entity_aliases.get(triple.tail, (triple.tail,))[0]
        return f"{head} | {relation} | {tail}"


def _read_alias_file(path: Path) -> dict[str, list[str]]:
    aliases: dict[str, list[str]] = {}
    try:
        with open(path, encoding="utf-8") as handle:
            for number, line in enumerate(handle, start=1):
                line = line.rstrip("\r\n")
                if not line.strip():
                    continue
                fields = line.split("\t")
                if len(fields) < 2:
                    raise KnowledgeStoreLoadError(
                        f"expected 'id<TAB>alias...', got {len(fields)} field(s)", str(path), number
                    )
                identifier = fields[0].strip()
                surfaces = [field.strip() for field in fields[1:] if field.strip()]
                if not identifier or not surfaces:
                    raise KnowledgeStoreLoadError("empty id or alias list", str(path), number)
                known = aliases.setdefault(identifier, [])
                known.extend(surface for surface in surfaces if surface not in known)
    except UnicodeDecodeError as exc:
        raise KnowledgeStoreLoadError(f"not valid UTF-8 ({exc.reason})", str(path)) from exc
    except OSError as exc:
        raise KnowledgeStoreLoadError(exc.strerror or str(exc), str(path)) from exc
    return aliases


def load_store(
    triple_files: Sequence[str | Path],
    entity_alias_file: str | Path,
    relation_alias_file: str | Path,
    missing_alias: MissingAliasPolicy = "reject",
) -> KnowledgeStore:
    """
    Load and merge triple files into a deduplicated `KnowledgeStore`.

    Args:
        triple_files: Files of `head<TAB>relation<TAB>tail` lines (LF or CRLF).
        entity_alias_file: File of `id<TAB>alias1<TAB>alias2...` lines for entities.
        relation_alias_file: Same format for relations.
        missing_alias: `reject` raises on ids absent from the alias files; `retain` keeps
            them with the raw id as their only surface form.

    Returns:
        KnowledgeStore: The union of all triples with duplicates removed.

    Raises:
        KnowledgeStoreLoadError: Malformed line, undecodable file, or (with `reject`) an
            id missing from the alias tables. The message names the file and line.
    """
    # Alias tables first, so triple ids can be checked against them
    entity_aliases = _read_alias_file(Path(entity_alias_file))
    relation_aliases = _read_alias_file(Path(relation_alias_file))

    triples: set[Triple] = set()
    retained = 0
    for triple_file in triple_files:
        path = Path(triple_file)
        try:
            with open(path, encoding="utf-8") as handle:
                for number, line in enumerate(handle, start=1):
                    line = line.rstrip("\r\n")
                    if not line.strip():
                        continue
                    fields = line.split("\t")
                    if len(fields) != 3:
                        raise KnowledgeStoreLoadError(
                            f"expected 3 tab-separated fields, got {len(fields)}", str(path), number
                        )
                    head, relation, tail = (field.strip() for field in fields)
                    if not head or not relation or not tail:
                        raise KnowledgeStoreLoadError("empty identifier", str(path), number)

                    for identifier, table in ((head, entity_aliases), (relation, relation_aliases), (tail, entity_aliases)):
                        if identifier in table:
                            continue
                        if missing_alias == "reject":
                            raise KnowledgeStoreLoadError(
                                f"id '{identifier}' has no alias entry", str(path), number
                            )
                        table[identifier] = [identifier]
                        retained += 1
                    triples.add(Triple(head, relation, tail))
        except UnicodeDecodeError as exc:
            raise KnowledgeStoreLoadError(f"not valid UTF-8 ({exc.reason})", str(path)) from exc
        except OSError as exc:
            raise KnowledgeStoreLoadError(exc.strerror or str(exc), str(path)) from exc

    # Indexes are built once over the merged, deduplicated triples
    store = KnowledgeStore(triples, entity_aliases, relation_aliases)
    stats = store.stats()
    logger.info(
        "Loaded knowledge store: %d triples, %d entities, %d relations",
        stats.triples, stats.entities, stats.relations,
    )
    if retained:
        logger.warning("%d id(s) without alias entries kept under their raw id", retained)
    return store


def _contains(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    """True when `needle` occurs as a contiguous run inside `haystack`."""
    size = len(needle)
    if size == 0 or size > len(haystack):
        return False
    return any(tuple(haystack[start:start + size]) == tuple(needle) for start in range(len(haystack) - size + 1))


class KgEngine:
    """
    Service class answering KG queries against one `KnowledgeStore`.

    Args:
        store (KnowledgeStore): Loaded graph, shared read-only.
        match_limit (int): Maximum entity ids returned by `match_entities`.
        token_counter (Callable[[str], int]): Counts tokens of a rendered triple for the
            `max_tokens` budget; whitespace tokens by default.
    """

    def __init__(
        self,
        store: KnowledgeStore,
        match_limit: int = DEFAULT_MATCH_LIMIT,
        token_counter: Callable[[str], int] = whitespace_token_count,
    ):
        self.store = store
        self.match_limit = match_limit
        self.token_counter = token_counter

    def match_entities(self, name: str) -> list[EntityId]:
        """
        Resolve a surface string to entity ids with three tiers of fuzziness.

        Tier 1: an alias normalizes to exactly the name. Tier 2 (only when tier 1 is empty):
        an alias contains the name, or is contained in it, as a contiguous token run.
        Tier 3 (only when both are empty): ids sharing at least one token with the name,
        most shared tokens first. Ties are broken by ascending id.

        Args:
            name (str): Entity string produced by the model.

        Returns:
            list[EntityId]: At most `match_limit` ids; empty when nothing matches.
        """
        normalized = normalize_surface(name)
        if not normalized:
            return []

        # Tier 1: exact alias
        exact = self.store.exact_ids(normalized)
        if exact:
            return sorted(exact)[: self.match_limit]

        # Ids sharing a token with the name are the candidates of tiers 2 and 3
        name_tokens = normalized.split()
        shared: Counter[EntityId] = Counter()
        for token in set(name_tokens):
            shared.update(self.store.ids_with_token(token))
        if not shared:
            return []

        # Tier 2: contiguous token containment either way
        contained = sorted(
            entity_id
            for entity_id in shared
            if any(
                _contains(alias, name_tokens) or _contains(name_tokens, alias)
                for alias in self.store.alias_token_sequences(entity_id)
            )
        )
        if contained:
            return contained[: self.match_limit]

        # Tier 3: most shared tokens
        ranked = sorted(shared.items(), key=lambda item: (-item[1], item[0]))
        return [entity_id for entity_id, _ in ranked[: self.match_limit]]

    def subgraph(self, entities: Iterable[EntityId]) -> list[Triple]:
        """All triples with a listed entity as head or tail, once each, in id order."""
        positions = set(chain.from_iterable(self.store.incident_triples(entity) for entity in entities))
        # store triples are pre-sorted, so position order is (head, relation, tail) order
        return [self.store.triple_at(position) for position in sorted(positions)]

    def rank_triples(self, query: KgQuery, candidates: Iterable[Triple]) -> list[ScoredTriple]:
        """
        Score candidates by distinct normalized tokens shared with the query strings.

        Args:
            query (KgQuery): Entity and relation strings; relations may be empty.
            candidates (Iterable[Triple]): Triples drawn from the store.

        Returns:
            list[ScoredTriple]: Highest score first, ties in (head, relation, tail) order.
        """
        query_tokens = set(chain.from_iterable(surface_tokens(text) for text in (*query.entities, *query.relations)))
        scored = []
        for triple in candidates:
            rendered = self.store.render(triple)
            score = len(query_tokens.intersection(surface_tokens(rendered)))
            scored.append(ScoredTriple(triple=triple, rendered=rendered, score=score))
        scored.sort(key=lambda item: (-item.score, item.triple))
        return scored

    def search(self, query: KgQuery, max_triples: int = 100, max_tokens: int = 1024) -> list[ScoredTriple]:
        """
        Match entities, extract their single-hop subgraph, rank it and truncate.

        The ranked list is cut to `max_triples`, then to the longest prefix whose rendered
        strings fit in `max_tokens`; a triple that would cross the budget ends the result.

        Args:
            query (KgQuery): Entities to match and relations to rank by.
            max_triples (int): Cap on returned triples.
            max_tokens (int): Cap on the summed `token_counter` of rendered strings.

        Returns:
            list[ScoredTriple]: A prefix of the ranking.
        """
        matched = sorted(set(chain.from_iterable(self.match_entities(name) for name in query.entities)))
        if not matched:
            return []

        ranked = self.rank_triples(query, self.subgraph(matched))[:max_triples]
        # Token budget: stop at the first triple that would cross it
        result = []
        used = 0
        for item in ranked:
            cost = self.token_counter(item.rendered)
            if used + cost > max_tokens:
                break
            result.append(item)
            used += cost
        return result
