"""
Pydantic schemas for document retrieval: documents, scored hits and provider settings.
"""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, SecretStr, model_validator


class Document(BaseModel):
    """One pre-chunked corpus passage (or web result, with its URL as doc_id)."""

    model_config = ConfigDict(frozen=True)

    doc_id: str = Field(min_length=1)
    title: str = Field(min_length=1)
    text: str = ""


class DocHit(BaseModel):
    """A retrieved document with its provider-specific score (higher is better)."""

    model_config = ConfigDict(frozen=True)

    document: Document
    score: float


class ProviderKind(str, Enum):
    """Which document search backend serves `doc_search`."""

    LOCAL_LEXICAL = "local-lexical"
    REMOTE_DENSE = "remote-dense"
    WEB = "web"


class ProviderConfig(BaseModel):
    """
    Settings of the single document provider active in a run.

    Fields:
        kind (ProviderKind): Backend to use.
        endpoint (str | None): Base URL, required for `remote-dense` and `web`.
        api_key (SecretStr | None): Bearer token; `web` falls back to `WEB_SEARCH_API_KEY`.
        top_k (int): Default number of documents per query.
        timeout (float): Per-request timeout in seconds.
        max_concurrent (int): Bound on in-flight requests for remote providers.
    """

    kind: ProviderKind = ProviderKind.LOCAL_LEXICAL
    endpoint: str | None = None
    api_key: SecretStr | None = None
    top_k: int = Field(default=5, ge=1)
    timeout: float = Field(default=30.0, gt=0)
    max_concurrent: int = Field(default=8, ge=1)

    @model_validator(mode="after")
    def _endpoint_for_remote(self) -> "ProviderConfig":
        if self.kind is not ProviderKind.LOCAL_LEXICAL and not self.endpoint:
            raise ValueError(f"provider kind '{self.kind.value}' requires an endpoint")
        return self
