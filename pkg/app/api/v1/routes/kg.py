"""
Knowledge-graph API routes (v1).

Exposes the in-process KG engine over HTTP so remote rollout workers can share one loaded
store.

Purpose:
- `POST /search`: match entities, rank their single-hop subgraph and truncate it.
- `GET /stats`: triple, entity and relation counts of the loaded store.
"""
# FastAPI imports:
from fastapi import APIRouter, Depends
# - APIRouter: to create a modular group of routes.
# - Depends: to inject the shared engine.

# Pydantic schemas for request and response validation:
from app.schemas.kg import KgQuery, StoreStats
from app.schemas.v1.kg import KgSearchRequestModel, KgSearchResponseModel, KgTripleModel

# Dependency resolving the engine loaded at startup (503 when absent)
from app.api.v1.dependencies import get_kg_engine

# Service class implementing the search pipeline
from app.services.kg_engine import KgEngine

# Create an APIRouter instance to register KG routes
kg_router = APIRouter()


@kg_router.post("/search", response_model=KgSearchResponseModel)
async def search(payload: KgSearchRequestModel, engine: KgEngine = Depends(get_kg_engine)) -> KgSearchResponseModel:
    """
    Search the knowledge graph.

    Args:
        payload (KgSearchRequestModel): Entities to match, relations to rank by, and the
            triple and token budgets.
        engine (KgEngine): Injected engine.

    Returns:
        KgSearchResponseModel: Ranked triples with their rendered form and score.
    """
    query = KgQuery(entities=payload.entity, relations=payload.relation)
    ranked = engine.search(query, payload.max_triples, payload.max_tokens)
    return KgSearchResponseModel(
        triples=[
            KgTripleModel(
                head=item.triple.head,
                relation=item.triple.relation,
                tail=item.triple.tail,
                rendered=item.rendered,
                score=item.score,
            )
            for item in ranked
        ]
    )


@kg_router.get("/stats", response_model=StoreStats)
async def stats(engine: KgEngine = Depends(get_kg_engine)) -> StoreStats:
    return engine.store.stats()
