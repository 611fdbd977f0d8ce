"""
Common dependency functions for API version v1.

Purpose:
- Resolve the shared `KgEngine` loaded at startup and inject it into route handlers.
- Keep routes testable: `app.dependency_overrides[get_kg_engine]` swaps the engine out.
"""

# FastAPI request object and error helpers
from fastapi import Request, status
from fastapi.exceptions import HTTPException

# Query engine stored on the application state at startup
from app.services.kg_engine import KgEngine


def get_kg_engine(request: Request) -> KgEngine:
    """
    Dependency returning the application's KG engine.

    Args:
        request (Request): Incoming request, used to reach `app.state`.

    Returns:
        KgEngine: The engine wrapping the loaded knowledge store.

    Raises:
        HTTPException 503: If no knowledge store is loaded.
    """
    engine = getattr(request.app.state, "kg_engine", None)
    if engine is None:
        raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail="Knowledge store not loaded")
    return engine
