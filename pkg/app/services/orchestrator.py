"""
Agentic rollout loop.

Purpose:
- Drive think -> search -> result iterations against an `LlmClient`: generation pauses at
  `</search>`, the request is executed against the document provider and the knowledge
  graph, and the rendered result is injected as a `<result>` block before generation resumes.
- Enforce the search and generation budgets, with one forced answer turn once the search
  budget is spent.
- Run groups of independent rollouts concurrently.

A chunk is committed to the trajectory only when the combined text still parses, so every
`RolloutResult.trajectory` is protocol-valid. Text that was not committed is kept in
`RolloutResult.discarded`.

Impact on SDLC:
- The loop only sees `LlmClient`, `DocProvider` and `KgEngine`, so every termination path
  is tested with scripted models and an in-process index.
- Provider failures become empty results and never end a rollout.
"""

# Concurrent rollout groups
import asyncio
import logging
import re

# Wall-clock latency per rollout
import time
from collections.abc import Callable
from functools import lru_cache
from pathlib import Path

from pydantic import BaseModel

# Failures degraded per search or isolated per rollout
from app.core.exceptions import HopSearchError, LlmError, ProtocolParseError, RetrievalError, SearchRequestError
# Schemas for queries, trajectories, logs and results
from app.schemas.kg import KgQuery, ScoredTriple
from app.schemas.protocol import SearchRequest, SegmentKind, Trajectory
from app.schemas.reward import RetrievalLog, RetrievalStep
from app.schemas.rollout import AgentConfig, RolloutResult, SearchMode, Termination

# Retrieval backends, the model interface and the protocol parser
from app.services.doc_retrieval import DocProvider, doc_search, filter_docs
from app.services.kg_engine import KgEngine
from app.services.llm import LlmClient, Message, ask_for_indices
from app.services.protocol import parse_search_request, parse_trajectory

logger = logging.getLogger(__name__)

RESOURCES = Path(__file__).resolve().parent.parent / "resources"
PROMPT_VERSION = "v1"

NO_RESULTS = "No results found."
FORCE_ANSWER = (
    "You have reached the maximum number of searches. Do not search again. "
    "Based on the information gathered so far, give the final answer now: "
    "<think> ... </think> <answer> The final answer is \\boxed{...} </answer>"
)

_DELIMITER = re.compile(r"</?(?:think|search|result|answer)>")


@lru_cache(maxsize=4)
def load_system_prompt(variant: str = "kg", version: str = PROMPT_VERSION) -> str:
    """Read a versioned system prompt shipped in `app/resources`."""
    return (RESOURCES / f"system_prompt_{variant}_{version}.txt").read_text(encoding="utf-8").strip()


def build_messages(question: str, variant: str = "kg") -> list[Message]:
    return [
        {"role": "system", "content": load_system_prompt(variant)},
        {"role": "user", "content": question},
    ]


class SearchTools:
    """
    The retrieval environment shared by every rollout of a run.

    Args:
        doc_provider (DocProvider): The single active document provider.
        kg_engine (KgEngine | None): KG search; without it the KG section is never rendered.
        filter_llm (LlmClient | None): Judge for the document and KG filters; the
            deterministic fallbacks apply without one.
    """

    def __init__(self, doc_provider: DocProvider, kg_engine: KgEngine | None = None, filter_llm: LlmClient | None = None):
        self.doc_provider = doc_provider
        self.kg_engine = kg_engine
        self.filter_llm = filter_llm


class SearchOutcome(BaseModel):
    """Rendered result body plus what the retrieval log records for this step."""

    text: str
    step: RetrievalStep


def _kg_filter_prompt(candidates: list[ScoredTriple], request: SearchRequest, question: str, limit: int) -> str:
    listing = "\n".join(f"[{number}] {item.rendered}" for number, item in enumerate(candidates))
    return (
        f"Select at most {limit} knowledge graph facts that help answer the search query.\n"
        f"Question: {question}\n"
        f"Search query: {request.query}\n"
        f"Queried entities: {', '.join(request.entity)}\n"
        f"Queried relations: {', '.join(request.relation) or '(none)'}\n"
        f"Matched entity-relation facts:\n{listing}\n"
        "Reply with a JSON list of the selected fact numbers, e.g. [0, 3]."
    )


async def kg_filter(
    candidates: list[ScoredTriple],
    request: SearchRequest,
    question: str,
    llm: LlmClient | None = None,
    limit: int = 5,
) -> list[ScoredTriple]:
    """
    Keep at most `limit` KG facts.

    With an LLM the selection is returned in candidate order; without one, or when the
    model fails or replies with no usable list, the `limit` best-scored candidates are kept.
    """
    if not candidates:
        return []
    fallback = sorted(candidates, key=lambda item: -item.score)[:limit]
    if llm is None:
        return fallback
    try:
        selected = await ask_for_indices(llm, _kg_filter_prompt(candidates, request, question, limit), len(candidates))
    except LlmError as exc:
        logger.warning("KG filter fell back to top-%d by score: %s", limit, exc)
        return fallback
    return [candidates[position] for position in selected[:limit]]


def _clean(text: str) -> str:
    """Injected text must not contain protocol delimiters."""
    return _DELIMITER.sub("", text)


async def execute_search(request: SearchRequest, question: str, tools: SearchTools, config: AgentConfig) -> SearchOutcome:
    """
    Run one search request against the documents and the knowledge graph.

    Args:
        request (SearchRequest): Parsed `<search>` payload.
        question (str): Original question, passed to the filters.
        tools (SearchTools): Providers and filter model.
        config (AgentConfig): top-k, KG budgets, filter limit and search mode.

    Returns:
        SearchOutcome: A "Documents:" section then a "Knowledge graph:" section, each
        omitted when empty and replaced by a one-line diagnostic when its tool fails;
        "No results found." when both are empty.
    """
    sections: list[str] = []
    step = RetrievalStep()
    filtering = config.search_mode is SearchMode.DOC_KG_FILTER

    # Document leg: a failure becomes a one-line diagnostic
    try:
        hits = await doc_search(tools.doc_provider, request.query, config.doc_top_k)
        if filtering:
            hits = await filter_docs(hits, request.query, question, tools.filter_llm)
    except RetrievalError as exc:
        logger.warning("Document search failed for %r: %s", request.query, exc)
        sections.append(f"Documents: search unavailable ({exc.cause})")
    else:
        step = RetrievalStep(titles=[hit.document.title for hit in hits], scores=[hit.score for hit in hits])
        if hits:
            body = "\n".join(
                f"[{number}] {hit.document.title}\n{hit.document.text}" for number, hit in enumerate(hits, start=1)
            )
            sections.append(f"Documents:\n{body}")

    # KG leg, only for modes that query the graph and requests naming entities
    if config.search_mode is not SearchMode.DOC and request.entity and tools.kg_engine is not None:
        try:
            query = KgQuery(entities=request.entity, relations=request.relation)
            triples = tools.kg_engine.search(query, config.kg_max_triples, config.kg_max_tokens)
            if filtering:
                triples = await kg_filter(triples, request, question, tools.filter_llm, config.kg_filter_limit)
        except HopSearchError as exc:
            logger.warning("KG search failed for %s: %s", request.entity, exc)
            sections.append(f"Knowledge graph: search unavailable ({exc})")
        else:
            if triples:
                sections.append("Knowledge graph:\n" + "\n".join(item.rendered for item in triples))

    text = _clean("\n\n".join(sections)) if sections else NO_RESULTS
    return SearchOutcome(text=text, step=step)


def _pending_stop(chunk: str) -> str | None:
    """The stop sequence that ended `chunk`: the close tag of its last unclosed segment."""
    answer_open = chunk.rfind(SegmentKind.ANSWER.open_tag)
    search_open = chunk.rfind(SegmentKind.SEARCH.open_tag)
    if answer_open > chunk.rfind(SegmentKind.ANSWER.close_tag) and answer_open >= search_open:
        return SegmentKind.ANSWER.close_tag
    if search_open > chunk.rfind(SegmentKind.SEARCH.close_tag):
        return SegmentKind.SEARCH.close_tag
    return None


def _result_block(text: str) -> str:
    return f"\n{SegmentKind.RESULT.open_tag}\n{text}\n{SegmentKind.RESULT.close_tag}\n"


async def run_rollout(
    question: str,
    llm: LlmClient,
    tools: SearchTools,
    config: AgentConfig | None = None,
    seed: int | None = None,
    index: int = 0,
) -> RolloutResult:
    """
    Generate one trajectory for `question`.

    Args:
        question (str): Question text, sent after the system prompt.
        llm (LlmClient): Policy model.
        tools (SearchTools): Retrieval environment.
        config (AgentConfig | None): Budgets, sampling and search mode; defaults when omitted.
        seed (int | None): Sampling seed forwarded to the model.
        index (int): Rollout index recorded on the result.

    Returns:
        RolloutResult: Parsed trajectory, one retrieval step per Search segment and the
        termination reason.
    """
    config = config or AgentConfig()
    started = time.perf_counter()
    base = build_messages(question, config.prompt_variant)

    committed = ""
    discarded: list[str] = []
    steps: list[RetrievalStep] = []
    used_units = 0
    searches = 0
    previous_malformed = False
    termination: Termination | None = None
    error: str | None = None

    while termination is None:
        forced = searches >= config.max_search_calls
        remaining = config.max_response_units - used_units
        if remaining <= 0:
            termination, error = Termination.BUDGET_EXHAUSTED, "generation budget spent"
            break

        # Resume the committed assistant text; a forced turn adds the answer instruction
        messages = list(base)
        if committed:
            messages.append({"role": "assistant", "content": committed})
        if forced:
            messages.append({"role": "user", "content": FORCE_ANSWER})

        try:
            generation = await llm.complete(
                messages,
                stop=config.stop_sequences,
                temperature=config.temperature,
                top_p=config.top_p,
                max_tokens=remaining,
                seed=seed,
            )
        except LlmError as exc:
            termination, error = Termination.LLM_ERROR, str(exc)
            break

        # Restore the stop sequence the server stripped
        used_units += generation.tokens
        truncated = generation.finish_reason == "length"
        chunk = generation.text
        stop = None if truncated else _pending_stop(chunk)
        if stop is not None:
            chunk += stop

        # Commit only chunks that keep the trajectory parseable
        try:
            trajectory = parse_trajectory(committed + chunk)
        except ProtocolParseError as exc:
            discarded.append(chunk)
            if truncated or forced:
                termination, error = Termination.BUDGET_EXHAUSTED, f"unfinished generation: {exc}"
            else:
                termination, error = Termination.PROTOCOL_ERROR, str(exc)
            break

        if len(trajectory.of_kind(SegmentKind.RESULT)) != searches:
            discarded.append(chunk)
            termination, error = Termination.PROTOCOL_ERROR, "model wrote a <result> block"
            break

        last = trajectory.segments[-1] if trajectory.segments else None
        if last is not None and last.kind is SegmentKind.ANSWER:
            committed += chunk
            termination = Termination.ANSWERED
            break

        if last is None or last.kind is not SegmentKind.SEARCH or stop != SegmentKind.SEARCH.close_tag:
            committed += chunk
            if truncated or forced:
                termination, error = Termination.BUDGET_EXHAUSTED, "no answer within budget"
            else:
                termination, error = Termination.PROTOCOL_ERROR, "generation ended without an answer"
            break

        # A search after the budget is spent is never executed
        if forced:
            discarded.append(chunk)
            termination, error = Termination.BUDGET_EXHAUSTED, "searched after the search budget was spent"
            break

        # One malformed request gets a corrective result; a second in a row ends the rollout
        committed += chunk
        searches += 1
        try:
            request = parse_search_request(last.text)
        except SearchRequestError as exc:
            steps.append(RetrievalStep())
            if previous_malformed:
                committed += _result_block(f"Invalid search request: {exc}")
                termination, error = Termination.PROTOCOL_ERROR, f"malformed search request twice: {exc}"
                break
            previous_malformed = True
            committed += _result_block(
                f'Invalid search request: {exc}. Use JSON like {{"query": "...", "entity": ["..."], "relation": ["..."]}}.'
            )
            continue

        previous_malformed = False
        outcome = await execute_search(request, question, tools, config)
        steps.append(outcome.step)
        committed += _result_block(outcome.text)

    return RolloutResult(
        index=index,
        question=question,
        trajectory=parse_trajectory(committed),
        retrieval_log=RetrievalLog(steps=steps),
        termination=termination,
        wall_time=time.perf_counter() - started,
        discarded="".join(discarded),
        error=error,
    )


async def run_group(
    question: str,
    group_size: int,
    llm_factory: Callable[[int], LlmClient],
    tools: SearchTools,
    config: AgentConfig | None = None,
    parallelism: int | None = None,
    seed: int | None = None,
) -> list[RolloutResult]:
    """
    Run `group_size` independent rollouts of one question.

    Args:
        question (str): Question text.
        group_size (int): Number of rollouts G, at least 1.
        llm_factory (Callable[[int], LlmClient]): Builds the client of rollout `index`.
        tools (SearchTools): Shared retrieval environment.
        config (AgentConfig | None): Rollout settings.
        parallelism (int | None): Concurrent rollouts; all at once when omitted.
        seed (int | None): Base seed; rollout `index` samples with `seed + index`.

    Returns:
        list[RolloutResult]: In completion order, each annotated with its index. A failing
        rollout (`LlmError` or `RetrievalError`) yields an `llm_error` result instead of
        aborting its siblings; any other exception cancels the group and propagates.
    """
    if group_size < 1:
        raise ValueError("group_size must be at least 1")
    semaphore = asyncio.Semaphore(parallelism or group_size)

    async def one(index: int) -> RolloutResult:
        async with semaphore:
            try:
                return await run_rollout(
                    question,
                    llm_factory(index),
                    tools,
                    config,
                    seed=None if seed is None else seed + index,
                    index=index,
                )
            except (LlmError, RetrievalError) as exc:
                logger.error("Rollout %d of %r failed: %s", index, question, exc)
                return RolloutResult(
                    index=index,
                    question=question,
                    trajectory=Trajectory(),
                    termination=Termination.LLM_ERROR,
                    error=repr(exc),
                )

    tasks = [asyncio.ensure_future(one(index)) for index in range(group_size)]
    results = []
    try:
        for finished in asyncio.as_completed(tasks):
            results.append(await finished)
    except BaseException:
        # Unexpected errors cancel the remaining rollouts
        for task in tasks:
            task.cancel()
        raise
    return results
