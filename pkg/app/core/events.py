"""
Application lifecycle event handlers.

This module defines startup and shutdown functions that are executed when the KG service
starts or stops.

Purpose:
- Configure logging and load the knowledge store named by the `KG_*` settings once, before
  the first request, so every request shares one read-only store.
- Release the store on shutdown.
"""

# Standard logger for lifecycle messages
import logging

# FastAPI application type, used to reach `app.state`
from fastapi import FastAPI

# Settings instance holding the KG file locations and log level
from app.config import Config

# Rich logging setup shared with the CLI
from app.core.logging import configure_logging

# Loader and query engine of the knowledge graph
from app.services.kg_engine import KgEngine, load_store

logger = logging.getLogger(__name__)


async def startup_event(app: FastAPI):
    """
    FastAPI startup event handler.

    Loads the knowledge store unless one was injected already (tests and `kg serve` pass
    a prebuilt store to `create_app`). Without `KG_TRIPLE_FILES` the service starts empty
    and answers 503 until restarted with a graph.

    Args:
        app (FastAPI): The application whose `state.kg_engine` is populated.
    """
    configure_logging(Config.LOG_LEVEL)

    if getattr(app.state, "kg_engine", None) is not None:
        logger.info("Knowledge store provided by the caller")
        return

    if not Config.KG_TRIPLE_FILES or not Config.KG_ENTITY_ALIASES or not Config.KG_RELATION_ALIASES:
        logger.warning("KG_TRIPLE_FILES / KG_*_ALIASES not set; KG search disabled")
        app.state.kg_engine = None
        return

    store = load_store(
        Config.KG_TRIPLE_FILES,
        Config.KG_ENTITY_ALIASES,
        Config.KG_RELATION_ALIASES,
        Config.KG_MISSING_ALIAS_POLICY,
    )
    app.state.kg_engine = KgEngine(store)


async def shutdown_event(app: FastAPI):
    """
    FastAPI shutdown event handler.

    Drops the reference to the store so its memory can be reclaimed.
    """
    logger.info("KG service shutting down")
    app.state.kg_engine = None
