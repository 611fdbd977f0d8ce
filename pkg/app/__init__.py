"""
Application package initializer.

Overview:
The `app` package is an agentic search runtime: a language model alternates reasoning
with searches over a document corpus and a knowledge graph, and its trajectories are
scored with answer metrics and retrieval-aware rewards.

Included Modules:
- `config.py`: settings loaded from `.env` or the environment (`Config`).
- `main.py`: FastAPI application serving the knowledge graph over HTTP.
- `cli.py` / `__main__.py`: the `run`, `score`, `kg serve` and `report` commands.
- `api/`: versioned route definitions and dependencies.
- `core/`: lifecycle events, logging and the exception hierarchy.
- `services/`: business logic.
- `schemas/`: Pydantic models.
- `resources/`: versioned system prompts.
- `utils/`: normalization and JSONL helpers.
"""
