"""
Language model clients.

Purpose:
- `LlmClient` is the one interface the orchestrator and the filters talk to.
- `ChatCompletionsClient` calls an OpenAI-compatible `/chat/completions` endpoint over
  httpx, retrying transient failures with tenacity. A trailing assistant message is
  continued in place (vLLM `continue_final_message`), which is how search results are fed
  back mid-generation.
- `ScriptedLlm` replays fixed chunks and honors stop sequences, for tests and offline runs.

Impact on SDLC:
- Every model call goes through one interface, so the rollout loop is tested against
  scripted output and served against a live endpoint without changes.
- Transport failures surface as `LlmError` after the retry budget is spent.
"""

import json
import logging
import re
from abc import ABC, abstractmethod
from collections.abc import Sequence

# Prompt templates are read once per process
from functools import lru_cache
from pathlib import Path

# Async HTTP client for the completions endpoint
import httpx

# Chat message schema
from pydantic import BaseModel

# Retry with exponential backoff on transient failures
from tenacity import AsyncRetrying, retry_if_exception, stop_after_attempt, wait_exponential

from app.config import Config
from app.core.exceptions import LlmError
from app.schemas.rollout import LlmConfig
from app.utils.helpers import replace_lone_surrogates, whitespace_token_count

logger = logging.getLogger(__name__)

Message = dict[str, str]

_INDEX_LIST = re.compile(r"\[[^\[\]]*\]")


class Generation(BaseModel):
    """One completion: text without the stop sequence, why it ended, tokens generated."""

    text: str
    finish_reason: str = "stop"
    tokens: int = 0


class LlmClient(ABC):
    @abstractmethod
    async def complete(
        self,
        messages: Sequence[Message],
        *,
        stop: Sequence[str] = (),
        temperature: float = 1.0,
        top_p: float = 1.0,
        max_tokens: int | None = None,
        seed: int | None = None,
    ) -> Generation:
        """
        Generate a continuation of `messages`.

        When the last message has role `assistant` the model continues that message
        instead of starting a new turn.

        Raises:
            LlmError: The endpoint failed after retries, or no output is available.
        """


def _is_transient(exc: BaseException) -> bool:
    if isinstance(exc, httpx.TransportError):
        return True
    if isinstance(exc, httpx.HTTPStatusError):
        return exc.response.status_code == 429 or exc.response.status_code >= 500
    return False


class ChatCompletionsClient(LlmClient):
    """
    Client of an OpenAI-compatible chat completions endpoint.

    Args:
        base_url (str): API root, e.g. `http://localhost:8000/v1`.
        model (str): Model name sent with every request.
        api_key (str | None): Bearer token.
        timeout (float): Per-request timeout in seconds.
        max_retries (int): Attempts per call, counting the first one.
        transport (httpx.AsyncBaseTransport | None): Custom transport (tests use MockTransport).
        wait_multiplier (float): Scale of the exponential backoff between attempts.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 120.0,
        max_retries: int = 3,
        transport: httpx.AsyncBaseTransport | None = None,
        wait_multiplier: float = 1.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self._api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries
        self._transport = transport
        self._wait_multiplier = wait_multiplier

    def _headers(self) -> dict[str, str]:
        if self._api_key:
            return {"Authorization": f"Bearer {self._api_key}"}
        return {}

    async def complete(
        self,
        messages: Sequence[Message],
        *,
        stop: Sequence[str] = (),
        temperature: float = 1.0,
        top_p: float = 1.0,
        max_tokens: int | None = None,
        seed: int | None = None,
    ) -> Generation:
        payload: dict = {
            "model": self.model,
            "messages": list(messages),
            "temperature": temperature,
            "top_p": top_p,
        }
        if stop:
            payload["stop"] = list(stop)
        if max_tokens is not None:
            payload["max_tokens"] = max_tokens
        if seed is not None:
            payload["seed"] = seed
        # Continue a trailing assistant message in place
        if messages and messages[-1].get("role") == "assistant":
            payload["continue_final_message"] = True
            payload["add_generation_prompt"] = False

        # Retry transport errors, 429 and 5xx only
        retrying = AsyncRetrying(
            stop=stop_after_attempt(self.max_retries),
            wait=wait_exponential(multiplier=self._wait_multiplier, max=8),
            retry=retry_if_exception(_is_transient),
            reraise=True,
        )
        try:
            async with httpx.AsyncClient(transport=self._transport, timeout=self.timeout) as client:
                async for attempt in retrying:
                    with attempt:
                        response = await client.post(
                            f"{self.base_url}/chat/completions", json=payload, headers=self._headers()
                        )
                        response.raise_for_status()
            body = response.json()
        except httpx.HTTPStatusError as exc:
            raise LlmError(f"chat completions returned HTTP {exc.response.status_code}") from exc
        except httpx.HTTPError as exc:
            raise LlmError(f"chat completions request failed: {exc!r}") from exc
        except ValueError as exc:
            raise LlmError("chat completions returned invalid JSON") from exc

        # Lone surrogates never leave the model boundary
        try:
            choice = body["choices"][0]
            text = replace_lone_surrogates(choice["message"]["content"] or "")
        except (KeyError, IndexError, TypeError) as exc:
            raise LlmError("chat completions response has no message content") from exc

        # Whitespace token count when the server reports no usage
        usage = body.get("usage") or {}
        tokens = usage.get("completion_tokens")
        return Generation(
            text=text,
            finish_reason=choice.get("finish_reason") or "stop",
            tokens=tokens if isinstance(tokens, int) else whitespace_token_count(text),
        )


class ScriptedLlm(LlmClient):
    """
    Replays `chunks` one per call, cutting each at the first stop sequence it contains.

    `calls` records the messages of every call.
    """

    def __init__(self, chunks: Sequence[str]):
        self._chunks = list(chunks)
        self._position = 0
        self.calls: list[list[Message]] = []

    async def complete(
        self,
        messages: Sequence[Message],
        *,
        stop: Sequence[str] = (),
        temperature: float = 1.0,
        top_p: float = 1.0,
        max_tokens: int | None = None,
        seed: int | None = None,
    ) -> Generation:
        self.calls.append([dict(message) for message in messages])
        if self._position >= len(self._chunks):
            raise LlmError(f"scripted model exhausted after {len(self._chunks)} chunk(s)")
        chunk = self._chunks[self._position]
        self._position += 1

        cut = min((chunk.find(sequence) for sequence in stop if sequence in chunk), default=-1)
        text = chunk[:cut] if cut >= 0 else chunk
        return Generation(text=text, finish_reason="stop", tokens=whitespace_token_count(text))


@lru_cache(maxsize=8)
def _load_script(path: Path) -> dict[str, list[str]]:
    try:
        script = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise LlmError(f"cannot read script {path}: {exc}") from exc
    if not isinstance(script, dict) or not all(
        isinstance(chunks, list) and all(isinstance(chunk, str) for chunk in chunks) for chunks in script.values()
    ):
        raise LlmError(f"script {path} must map question ids to lists of strings")
    return script


def build_llm(config: LlmConfig, question_id: str | None = None) -> LlmClient:
    """
    Build the client described by `config`.

    Unset HTTP fields fall back to the `LLM_*` settings. A scripted client replays the
    chunks listed under `question_id`; an unknown id yields a client that fails on first use.
    """
    if config.kind == "scripted":
        chunks = _load_script(config.script.resolve()).get(question_id or "", [])
        if not chunks:
            logger.warning("Script %s has no chunks for question %s", config.script, question_id)
        return ScriptedLlm(chunks)

    api_key = config.api_key or Config.LLM_API_KEY
    return ChatCompletionsClient(
        base_url=config.base_url or Config.LLM_BASE_URL,
        model=config.model or Config.LLM_MODEL,
        api_key=api_key.get_secret_value() if api_key else None,
        timeout=config.timeout or Config.LLM_TIMEOUT,
        max_retries=config.max_retries or Config.LLM_MAX_RETRIES,
    )


async def ask_for_indices(llm: LlmClient, prompt: str, size: int) -> list[int]:
    """
    Ask `llm` to pick items and parse its JSON list of 0-based indices.

    Args:
        llm (LlmClient): Judge model.
        prompt (str): User prompt listing `size` numbered candidates.
        size (int): Number of candidates; out-of-range indices are dropped.

    Returns:
        list[int]: Distinct valid indices in ascending order.

    Raises:
        LlmError: The call failed or the reply holds no JSON list of integers.
    """
    generation = await llm.complete([{"role": "user", "content": prompt}], temperature=0.0, max_tokens=256)
    match = _INDEX_LIST.search(generation.text)
    if match is None:
        raise LlmError(f"no index list in reply: {generation.text[:80]!r}")
    try:
        values = json.loads(match.group(0))
    except ValueError as exc:
        raise LlmError(f"index list is not valid JSON: {match.group(0)[:80]!r}") from exc
    if not all(isinstance(value, int) and not isinstance(value, bool) for value in values):
        raise LlmError("index list must contain integers only")
    return sorted({value for value in values if 0 <= value < size})
