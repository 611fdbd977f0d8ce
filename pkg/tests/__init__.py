"""
Test suite package initializer.

Structure:
- `test_helpers.py`: surface normalization and JSONL writing.
- `test_kg_engine.py`: store loading, entity matching, ranking and truncation.
- `test_doc_retrieval.py`: BM25 index, remote providers (mocked HTTP) and the document filter.
- `test_protocol.py`: trajectory parsing, serialization, validation and loss masks.
- `test_rewards.py`: answer metrics and the reward stack.
- `test_llm.py`: chat-completions client and scripted model.
- `test_orchestrator.py`: the rollout loop, budgets and groups.
- `test_evaluation.py`: datasets, manifests, evaluation runs and report rendering.
- `test_kg_api.py` / `test_cli.py`: the HTTP and command-line surfaces.
- Shared fixtures live in `conftest.py`, fixture files in `fixtures/`.

Async tests run on the anyio pytest plugin (`@pytest.mark.anyio`, asyncio backend);
property tests use hypothesis.

Example:
    pytest tests/
"""
