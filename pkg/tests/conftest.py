"""
Shared pytest fixtures.

Fixture data lives in `tests/fixtures/`:
- `toy_*.tsv`: a 12-triple film graph (Avatar, Titanic) for matching and ranking tests.
- `crew_*.tsv`: a 30-triple graph around the MacArthur Fellowship multi-hop question.
- `corpus.jsonl`: six Wikipedia-style passages.
- `gold_crew.jsonl` / `script_crew.json`: the gold record and scripted rollout of that question.
"""

import json
from pathlib import Path

import pytest

from app.schemas.document import Document
from app.schemas.reward import GoldRecord
from app.services.doc_retrieval import LocalLexicalProvider, index_corpus, load_corpus
from app.services.kg_engine import KgEngine, KnowledgeStore, load_store
from app.services.orchestrator import SearchTools

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def anyio_backend():
    return "asyncio"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def toy_store() -> KnowledgeStore:
    return load_store(
        [FIXTURES / "toy_triples.tsv"], FIXTURES / "toy_entities.tsv", FIXTURES / "toy_relations.tsv"
    )


@pytest.fixture(scope="session")
def crew_store() -> KnowledgeStore:
    return load_store(
        [FIXTURES / "crew_triples.tsv"], FIXTURES / "crew_entities.tsv", FIXTURES / "crew_relations.tsv"
    )


@pytest.fixture
def toy_engine(toy_store) -> KgEngine:
    return KgEngine(toy_store)


@pytest.fixture
def crew_engine(crew_store) -> KgEngine:
    return KgEngine(crew_store)


@pytest.fixture(scope="session")
def corpus() -> list[Document]:
    return load_corpus(FIXTURES / "corpus.jsonl")


@pytest.fixture
def local_provider(corpus) -> LocalLexicalProvider:
    return LocalLexicalProvider(index_corpus(corpus))


@pytest.fixture
def crew_tools(local_provider, crew_engine) -> SearchTools:
    return SearchTools(local_provider, crew_engine)


@pytest.fixture(scope="session")
def crew_gold() -> GoldRecord:
    return GoldRecord.model_validate_json((FIXTURES / "gold_crew.jsonl").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def crew_chunks() -> list[str]:
    return json.loads((FIXTURES / "script_crew.json").read_text(encoding="utf-8"))["frames-crew"]
