"""
Document search behind one provider interface.

Purpose:
- `LexicalIndex`: an immutable in-process BM25 index (k1=1.2, b=0.75) over the normalized
  tokens of title and text. Deterministic, so tests and desk-scale runs need no model.
- `RemoteDenseProvider`: client of a dense retriever exposing `POST /search`.
- `WebSearchProvider`: client of a Tavily-style web search API.
- `filter_docs`: keeps the hits an LLM judges relevant, with a token-overlap fallback.

Impact on SDLC:
- Remote providers bound their in-flight requests with a semaphore and report failures as
  `RetrievalError`; the orchestrator degrades those to an empty result.
- The lexical index makes every retrieval test reproducible offline.
"""

# Semaphores bounding concurrent provider requests
import asyncio
import json
import logging

# BM25 idf and document length statistics
import math
from abc import ABC, abstractmethod
from collections import Counter
from collections.abc import Iterable
from pathlib import Path

# Async HTTP client for the dense and web providers
import httpx

# Validation of corpus rows and provider responses
from pydantic import ValidationError

# Global settings: endpoints, keys and concurrency limits
from app.config import Config

# Errors surfaced to the orchestrator and the CLI
from app.core.exceptions import DatasetLoadError, IndexingError, LlmError, RetrievalError

# Document schemas and provider settings
from app.schemas.document import DocHit, Document, ProviderConfig, ProviderKind

# LLM relevance filtering
from app.services.llm import LlmClient, ask_for_indices

# JSONL reading and tokenization shared with the KG engine
from app.utils.helpers import read_jsonl, surface_tokens

logger = logging.getLogger(__name__)

BM25_K1 = 1.2
BM25_B = 0.75


def load_corpus(path: str | Path) -> list[Document]:
    """
    Read a JSONL corpus of `{"id", "title", "text"}` objects.

    Raises:
        DatasetLoadError: A line is not valid JSON or misses a required field.
    """
    documents = []
    for number, line in read_jsonl(path):
        try:
            record = json.loads(line)
            document = Document(doc_id=str(record["id"]), title=record["title"], text=record.get("text") or "")
        except (ValueError, KeyError, TypeError, ValidationError) as exc:
            raise DatasetLoadError(f"{path}:{number}: invalid corpus record ({exc})") from exc
        documents.append(document)
    logger.info("Loaded %d documents from %s", len(documents), path)
    return documents


class LexicalIndex:
    """
    Immutable BM25 inverted index.

    Scores use idf = ln(1 + (N - df + 0.5) / (df + 0.5)), which is positive for every
    indexed term, so any document sharing a query term scores above zero.
    """

    def __init__(self, documents: Iterable[Document]):
        self._documents: list[Document] = []
        seen: set[str] = set()
        postings: dict[str, dict[int, int]] = {}
        lengths: list[int] = []
        for document in documents:
            if document.doc_id in seen:
                raise IndexingError(f"duplicate doc_id '{document.doc_id}'")
            seen.add(document.doc_id)
            position = len(self._documents)
            self._documents.append(document)
            tokens = surface_tokens(f"{document.title} {document.text}")
            lengths.append(len(tokens))
            for token, count in Counter(tokens).items():
                postings.setdefault(token, {})[position] = count

        self._postings = postings
        self._lengths = lengths
        self._average_length = math.fsum(lengths) / len(lengths) if lengths else 0.0

    def __len__(self) -> int:
        return len(self._documents)

    def _idf(self, token: str) -> float:
        df = len(self._postings.get(token, ()))
        total = len(self._documents)
        return math.log(1 + (total - df + 0.5) / (df + 0.5))

    def search(self, query: str, k: int) -> list[DocHit]:
        """
        Top `k` documents by BM25, ties by ascending doc_id.

        Repeated query tokens contribute once per occurrence. Documents without any query
        token are never returned.
        """
        if k < 1 or not self._documents:
            return []
        # Accumulate BM25 contributions over the postings of every query token
        scores: dict[int, float] = {}
        for token in surface_tokens(query):
            postings = self._postings.get(token)
            if not postings:
                continue
            idf = self._idf(token)
            for position, tf in postings.items():
                norm = 1 - BM25_B + BM25_B * self._lengths[position] / self._average_length
                scores[position] = scores.get(position, 0.0) + idf * tf * (BM25_K1 + 1) / (tf + BM25_K1 * norm)

        # Highest score first, ties by ascending doc_id
        ranked = sorted(
            ((score, self._documents[position]) for position, score in scores.items() if score > 0),
            key=lambda item: (-item[0], item[1].doc_id),
        )
        return [DocHit(document=document, score=score) for score, document in ranked[:k]]


def index_corpus(documents: Iterable[Document]) -> LexicalIndex:
    index = LexicalIndex(documents)
    logger.info("Indexed %d documents", len(index))
    return index


class DocProvider(ABC):
    """A document search backend."""

    kind: ProviderKind

    @abstractmethod
    async def search(self, query: str, k: int) -> list[DocHit]:
        """
        Return at most `k` hits in non-increasing score order.

        Raises:
            RetrievalError: The backend failed; carries the provider kind and cause.
        """


async def doc_search(provider: DocProvider, query: str, k: int) -> list[DocHit]:
    hits = await provider.search(query, k)
    return hits[:k]


class LocalLexicalProvider(DocProvider):
    kind = ProviderKind.LOCAL_LEXICAL

    def __init__(self, index: LexicalIndex):
        self.index = index

    async def search(self, query: str, k: int) -> list[DocHit]:
        return self.index.search(query, k)


class _HttpProvider(DocProvider):
    """Shared request plumbing of the remote providers."""

    def __init__(self, config: ProviderConfig, transport: httpx.AsyncBaseTransport | None = None):
        self.config = config
        self._transport = transport
        self._semaphore = asyncio.Semaphore(config.max_concurrent)

    def _headers(self) -> dict[str, str]:
        return {}

    async def _post(self, url: str, payload: dict) -> dict:
        async with self._semaphore:
            try:
                async with httpx.AsyncClient(transport=self._transport, timeout=self.config.timeout) as client:
                    response = await client.post(url, json=payload, headers=self._headers())
                    response.raise_for_status()
                    body = response.json()
            except httpx.TimeoutException as exc:
                raise RetrievalError(self.kind.value, f"timeout after {self.config.timeout}s") from exc
            except httpx.HTTPStatusError as exc:
                raise RetrievalError(self.kind.value, f"HTTP {exc.response.status_code}") from exc
            except httpx.HTTPError as exc:
                raise RetrievalError(self.kind.value, repr(exc)) from exc
            except ValueError as exc:
                raise RetrievalError(self.kind.value, "response is not valid JSON") from exc
        # Every provider answers with a JSON object
        if not isinstance(body, dict):
            raise RetrievalError(self.kind.value, "response is not a JSON object")
        return body

    @staticmethod
    def _ordered(hits: list[DocHit], k: int) -> list[DocHit]:
        # stable sort keeps the backend's order among equal scores
        return sorted(hits, key=lambda hit: -hit.score)[:k]


class RemoteDenseProvider(_HttpProvider):
    """Dense retriever: `POST {endpoint}/search` with `{"query", "top_k"}` -> `{"hits": [...]}`."""

    kind = ProviderKind.REMOTE_DENSE

    def _headers(self) -> dict[str, str]:
        if self.config.api_key:
            return {"Authorization": f"Bearer {self.config.api_key.get_secret_value()}"}
        return {}

    async def search(self, query: str, k: int) -> list[DocHit]:
        body = await self._post(f"{self.config.endpoint.rstrip('/')}/search", {"query": query, "top_k": k})
        hits = []
        try:
            for item in body.get("hits", []):
                document = Document(doc_id=str(item["id"]), title=item["title"], text=item.get("text", ""))
                hits.append(DocHit(document=document, score=float(item.get("score", 0.0))))
        except (KeyError, TypeError, ValueError, ValidationError) as exc:
            raise RetrievalError(self.kind.value, f"malformed hit ({exc})") from exc
        return self._ordered(hits, k)


class WebSearchProvider(_HttpProvider):
    """
    Tavily-style web search: `POST {endpoint}` with `{"query", "max_results"}`.

    Results map `url` to doc_id, `title` to title and `content` to text. Results without a
    score are ranked by position.
    """

    kind = ProviderKind.WEB

    def _headers(self) -> dict[str, str]:
        api_key = self.config.api_key or Config.WEB_SEARCH_API_KEY
        if api_key:
            return {"Authorization": f"Bearer {api_key.get_secret_value()}"}
        return {}

    async def search(self, query: str, k: int) -> list[DocHit]:
        body = await self._post(self.config.endpoint, {"query": query, "max_results": k})
        results = body.get("results", [])
        hits = []
        try:
            for rank, item in enumerate(results):
                url = item["url"]
                document = Document(doc_id=url, title=item.get("title") or url, text=item.get("content", ""))
                score = item.get("score")
                hits.append(DocHit(document=document, score=float(score) if score is not None else float(len(results) - rank)))
        except (KeyError, TypeError, ValueError, ValidationError) as exc:
            raise RetrievalError(self.kind.value, f"malformed result ({exc})") from exc
        return self._ordered(hits, k)


def build_provider(
    config: ProviderConfig,
    corpus: Iterable[Document] | None = None,
    transport: httpx.AsyncBaseTransport | None = None,
) -> DocProvider:
    """
    Build the provider named by `config.kind`.

    Raises:
        IndexingError: `local-lexical` without a corpus, or with duplicate ids.
    """
    if config.kind is ProviderKind.LOCAL_LEXICAL:
        if corpus is None:
            raise IndexingError("the local-lexical provider requires a corpus")
        return LocalLexicalProvider(index_corpus(corpus))
    if config.kind is ProviderKind.REMOTE_DENSE:
        return RemoteDenseProvider(config, transport)
    return WebSearchProvider(config, transport)


def _overlap_filter(hits: list[DocHit], subquery: str) -> list[DocHit]:
    query_tokens = set(surface_tokens(subquery))
    return [
        hit for hit in hits
        if query_tokens.intersection(surface_tokens(f"{hit.document.title} {hit.document.text}"))
    ]


def _doc_filter_prompt(hits: list[DocHit], subquery: str, question: str) -> str:
    listing = "\n".join(
        f"[{number}] {hit.document.title}: {hit.document.text}" for number, hit in enumerate(hits)
    )
    return (
        "Select the documents that help answer the search query in the context of the question.\n"
        f"Question: {question}\n"
        f"Search query: {subquery}\n"
        f"Documents:\n{listing}\n"
        "Reply with a JSON list of the selected document numbers, e.g. [0, 2]. Reply [] if none help."
    )


async def filter_docs(
    hits: list[DocHit],
    subquery: str,
    question: str,
    llm: LlmClient | None = None,
) -> list[DocHit]:
    """
    Keep the relevant hits, in their original order.

    Args:
        hits (list[DocHit]): Retrieved documents.
        subquery (str): Query the documents were retrieved for.
        question (str): Original question, for the judge's context.
        llm (LlmClient | None): Judge model. Without one (or when it fails) hits sharing at
            least one normalized token with the subquery are kept.

    Returns:
        list[DocHit]: A subsequence of `hits`.
    """
    if not hits:
        return []
    if llm is None:
        return _overlap_filter(hits, subquery)
    # Judge failures fall back to the overlap filter
    try:
        selected = await ask_for_indices(llm, _doc_filter_prompt(hits, subquery, question), len(hits))
    except LlmError as exc:
        logger.warning("Document filter fell back to token overlap: %s", exc)
        return _overlap_filter(hits, subquery)
    return [hits[position] for position in selected]
