"""
Service layer package initializer.

This package holds the runtime's business logic. Services are plain modules and classes
with no dependency on FastAPI request objects, so the CLI, the KG service and the tests
all call them directly.

Included Service Modules:
- `kg_engine.py`: knowledge store loading, entity matching and ranked subgraph search.
- `doc_retrieval.py`: BM25 index, remote dense and web search providers, document filter.
- `protocol.py`: trajectory parsing/serialization, search payloads, boxed answers, loss masks.
- `rewards.py`: F1/CEM/EM metrics and the accuracy, gain and overall rewards.
- `llm.py`: chat-completions client with retries and a scripted test double.
- `orchestrator.py`: the think -> search -> result rollout loop and rollout groups.
- `evaluation.py`: manifests, datasets, evaluation runs, offline scoring and reports.
"""
