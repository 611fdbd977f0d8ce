"""
Tests for the language model clients.

Purpose:
- Request payloads and response mapping of the chat-completions client.
- Retries on transient failures, no retries on client errors.
- Scripted replay with stop sequences, and index-list replies of judge models.
"""

import json

import httpx
import pytest

from app.core.exceptions import LlmError
from app.schemas.rollout import LlmConfig
from app.services.llm import ChatCompletionsClient, ScriptedLlm, ask_for_indices, build_llm


def completion(content: str, finish_reason: str = "stop", tokens: int | None = 4) -> dict:
    body = {"choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": finish_reason}]}
    if tokens is not None:
        body["usage"] = {"completion_tokens": tokens}
    return body


def client_for(handler, **kwargs) -> ChatCompletionsClient:
    return ChatCompletionsClient(
        "http://llm.test/v1/", "policy", api_key="k", transport=httpx.MockTransport(handler), wait_multiplier=0, **kwargs
    )


@pytest.mark.anyio
async def test_chat_completion_payload_and_mapping():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["url"] = str(request.url)
        seen["auth"] = request.headers["Authorization"]
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json=completion("<think>hi</think>", "stop", 3))

    generation = await client_for(handler).complete(
        [{"role": "user", "content": "q"}], stop=["</search>"], temperature=0.7, top_p=0.9, max_tokens=64, seed=11
    )

    assert seen["url"] == "http://llm.test/v1/chat/completions"
    assert seen["auth"] == "Bearer k"
    assert seen["body"] == {
        "model": "policy",
        "messages": [{"role": "user", "content": "q"}],
        "temperature": 0.7,
        "top_p": 0.9,
        "stop": ["</search>"],
        "max_tokens": 64,
        "seed": 11,
    }
    assert (generation.text, generation.finish_reason, generation.tokens) == ("<think>hi</think>", "stop", 3)


@pytest.mark.anyio
async def test_trailing_assistant_message_is_continued():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json=completion("more text", tokens=None))

    generation = await client_for(handler).complete(
        [{"role": "user", "content": "q"}, {"role": "assistant", "content": "<think>"}]
    )
    assert seen["body"]["continue_final_message"] is True
    assert seen["body"]["add_generation_prompt"] is False
    assert generation.tokens == 2


@pytest.mark.anyio
async def test_transient_failures_are_retried():
    statuses = iter([503, 429, 200])

    def handler(request: httpx.Request) -> httpx.Response:
        status = next(statuses)
        if status != 200:
            return httpx.Response(status)
        return httpx.Response(200, json=completion("ok"))

    generation = await client_for(handler, max_retries=3).complete([{"role": "user", "content": "q"}])
    assert generation.text == "ok"


@pytest.mark.anyio
async def test_retries_exhausted():
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(request)
        return httpx.Response(502)

    with pytest.raises(LlmError, match="HTTP 502"):
        await client_for(handler, max_retries=2).complete([{"role": "user", "content": "q"}])
    assert len(calls) == 2


@pytest.mark.anyio
async def test_client_error_is_not_retried():
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(request)
        return httpx.Response(400, json={"error": "bad request"})

    with pytest.raises(LlmError, match="HTTP 400"):
        await client_for(handler).complete([{"role": "user", "content": "q"}])
    assert len(calls) == 1


@pytest.mark.anyio
async def test_response_without_content():
    client = client_for(lambda request: httpx.Response(200, json={"choices": []}))
    with pytest.raises(LlmError, match="no message content"):
        await client.complete([{"role": "user", "content": "q"}])


@pytest.mark.anyio
async def test_lone_surrogates_in_model_output_are_replaced():
    # Raw bytes: an unpaired escape survives JSON decoding as a lone surrogate
    body = b'{"choices": [{"message": {"content": "Skeleton \\ud800Crew"}, "finish_reason": "stop"}]}'
    client = client_for(lambda request: httpx.Response(200, content=body))
    generation = await client.complete([{"role": "user", "content": "q"}])
    assert generation.text == "Skeleton \ufffdCrew"
    generation.text.encode("utf-8")


@pytest.mark.anyio
async def test_scripted_llm_cuts_at_earliest_stop():
    llm = ScriptedLlm(["<think>a</think><search>{}</search><result>x</result>", "<answer>\\boxed{y}</answer> tail"])
    first = await llm.complete([{"role": "user", "content": "q"}], stop=["</answer>", "</search>"])
    second = await llm.complete([{"role": "user", "content": "q"}], stop=["</answer>"])
    assert first.text == "<think>a</think><search>{}"
    assert second.text == "<answer>\\boxed{y}"
    assert len(llm.calls) == 2


@pytest.mark.anyio
async def test_scripted_llm_exhaustion():
    llm = ScriptedLlm([])
    with pytest.raises(LlmError, match="exhausted"):
        await llm.complete([{"role": "user", "content": "q"}])


def test_build_llm(fixtures_dir):
    scripted = build_llm(LlmConfig(kind="scripted", script=fixtures_dir / "script_crew.json"), "frames-crew")
    assert isinstance(scripted, ScriptedLlm)

    http = build_llm(LlmConfig(base_url="http://other.test/v1", model="m", max_retries=5))
    assert isinstance(http, ChatCompletionsClient)
    assert (http.base_url, http.model, http.max_retries) == ("http://other.test/v1", "m", 5)


@pytest.mark.anyio
async def test_build_llm_unknown_question_fails_on_use(fixtures_dir):
    llm = build_llm(LlmConfig(kind="scripted", script=fixtures_dir / "script_crew.json"), "missing")
    with pytest.raises(LlmError):
        await llm.complete([{"role": "user", "content": "q"}])


@pytest.mark.anyio
@pytest.mark.parametrize(
    ("reply", "expected"),
    [
        ("[0, 2]", [0, 2]),
        ("Keep these: [3, 1, 3, 42, -1]", [1, 3]),
        ("[]", []),
    ],
)
async def test_ask_for_indices(reply, expected):
    assert await ask_for_indices(ScriptedLlm([reply]), "pick", 5) == expected


@pytest.mark.anyio
@pytest.mark.parametrize("reply", ["none of them", '["a", "b"]', "[true]", "[1, 2"])
async def test_ask_for_indices_rejects_unusable_replies(reply):
    with pytest.raises(LlmError):
        await ask_for_indices(ScriptedLlm([reply]), "pick", 5)
