"""
Root package for all Pydantic schemas.

Purpose:
- Domain models shared by the services (`kg`, `document`, `protocol`, `reward`,
  `rollout`, `evaluation`).
- `v1/` holds the HTTP contracts of the KG service, versioned with the API.
"""

from .document import DocHit, Document, ProviderConfig, ProviderKind
from .evaluation import EvalReport, QuestionRow, RunManifest, TrajectoryRecord
from .kg import KgQuery, ScoredTriple, StoreStats, Triple
from .protocol import LossMask, SearchRequest, Segment, SegmentKind, Trajectory
from .reward import GoldRecord, RetrievalLog, RetrievalStep, RewardBreakdown, RewardConfig
from .rollout import AgentConfig, LlmConfig, RolloutResult, SearchMode, Termination

__all__ = [
    "AgentConfig",
    "DocHit",
    "Document",
    "EvalReport",
    "GoldRecord",
    "KgQuery",
    "LlmConfig",
    "LossMask",
    "ProviderConfig",
    "ProviderKind",
    "QuestionRow",
    "RetrievalLog",
    "RetrievalStep",
    "RewardBreakdown",
    "RewardConfig",
    "RolloutResult",
    "RunManifest",
    "ScoredTriple",
    "SearchMode",
    "SearchRequest",
    "Segment",
    "SegmentKind",
    "StoreStats",
    "Termination",
    "Trajectory",
    "TrajectoryRecord",
    "Triple",
]
