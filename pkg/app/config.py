"""
Application configuration module using environment variables.

Defines settings using Pydantic's BaseSettings, loading values from `.env` files or the OS
environment. Run-specific choices (datasets, providers, agent and reward constants) live in
the run manifest instead; this module only holds process-wide endpoints, secrets and the
knowledge-graph files the KG service loads at startup.

Purpose:
- Centralizes endpoint URLs and API keys (`LLM_API_KEY`, `WEB_SEARCH_API_KEY`).
- Ensures type-safe, validated configuration.
"""

from typing import Literal

# Import BaseSettings for environment-driven configuration and SettingsConfigDict for customization
from pydantic import SecretStr
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Centralized runtime configuration management using Pydantic BaseSettings.

    Every field has a default so the library can be imported (and tested) without a `.env`.

    Attributes:
        LLM_API_KEY (SecretStr | None): Bearer token for the chat-completions endpoint.
        LLM_BASE_URL (str): Base URL of the chat-completions API (`/chat/completions` is appended).
        LLM_MODEL (str): Model name sent with every completion request.
        LLM_TIMEOUT (float): Per-request timeout in seconds.
        LLM_MAX_RETRIES (int): Attempts per completion request before giving up.
        WEB_SEARCH_API_KEY (SecretStr | None): Bearer token for the web search provider.
        WEB_SEARCH_ENDPOINT (str): Tavily-style search endpoint.
        KG_TRIPLE_FILES (list[str]): Triple files loaded by the KG service.
        KG_ENTITY_ALIASES (str | None): Entity alias file for the KG service.
        KG_RELATION_ALIASES (str | None): Relation alias file for the KG service.
        KG_MISSING_ALIAS_POLICY (str): `reject` or `retain` ids missing from alias files.
        LOG_LEVEL (str): Root logging level.
    """

    # Chat-completions endpoint used by rollouts and, by default, the filters
    LLM_API_KEY: SecretStr | None = None
    LLM_BASE_URL: str = "http://localhost:8000/v1"
    LLM_MODEL: str = "search-agent-7b"
    LLM_TIMEOUT: float = 120.0
    LLM_MAX_RETRIES: int = 3

    # Web search provider (Tavily-compatible)
    WEB_SEARCH_API_KEY: SecretStr | None = None
    WEB_SEARCH_ENDPOINT: str = "https://api.tavily.com/search"

    # Knowledge graph files for `kg serve` / `uvicorn app.main:app`
    KG_TRIPLE_FILES: list[str] = []
    KG_ENTITY_ALIASES: str | None = None
    KG_RELATION_ALIASES: str | None = None
    KG_MISSING_ALIAS_POLICY: Literal["reject", "retain"] = "reject"

    LOG_LEVEL: str = "INFO"

    # Configures how Pydantic loads and validates environment variables
    model_config = SettingsConfigDict(
        env_file=".env",   # Specifies the file to load environment variables from
        extra="ignore"     # Ignores any env vars not explicitly defined in this class
    )


# Instantiate the settings at module level for global access
Config = Settings()
