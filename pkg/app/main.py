"""
Application entry point of the KG service.

This module creates and configures the FastAPI app instance, registers the KG routes and
wires the lifespan hooks that load the knowledge store.

Purpose:
- `create_app` builds an app, optionally around a prebuilt `KgEngine` (used by tests and
  by `kg serve`, which loads the files named on the command line).
- The module-level `app` is the ASGI target for `uvicorn app.main:app`, configured from
  the `KG_*` settings.
"""

# Context manager utility for defining app lifespan hooks (startup and shutdown)
from contextlib import asynccontextmanager

# Core FastAPI app class used to create the ASGI application
from fastapi import FastAPI

# Router for KG search and stats endpoints
from app.api.v1.routes.kg import kg_router

# Application startup and shutdown event handlers (logging, store loading)
from app.core.events import shutdown_event, startup_event

# Query engine type accepted by the factory
from app.services.kg_engine import KgEngine

# Application version used in routing and documentation
version = "v1"


def create_app(engine: KgEngine | None = None) -> FastAPI:
    """
    Build the KG service application.

    Args:
        engine (KgEngine | None): Engine to serve; when omitted the startup event loads the
            store named by the settings.

    Returns:
        FastAPI: The configured application.
    """

    @asynccontextmanager
    async def life_span(app: FastAPI):
        # Load the knowledge store before the first request
        await startup_event(app)

        # Yield control to allow app execution
        yield

        # Release the store
        await shutdown_event(app)

    application = FastAPI(
        title="HopSearch KG service",  # API title for OpenAPI docs
        description="Entity/relation search over a Wikidata-format knowledge graph",
        version=version,
        lifespan=life_span,
    )
    application.state.kg_engine = engine

    # Register the KG router; endpoints are /kg/search and /kg/stats
    application.include_router(kg_router, prefix="/kg", tags=["kg"])
    return application


app = create_app()
