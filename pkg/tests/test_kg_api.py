"""
Tests for the KG service HTTP API.

Purpose:
- `POST /kg/search` and `GET /kg/stats` against the toy graph.
- Request validation and the 503 returned when no store is loaded.
"""

import pytest
from fastapi.testclient import TestClient

from app.main import create_app
from app.services.kg_engine import KgEngine


@pytest.fixture
def client(toy_store):
    with TestClient(create_app(KgEngine(toy_store))) as test_client:
        yield test_client


def test_search_ranks_director_first(client):
    response = client.post("/kg/search", json={"entity": ["Avatar"], "relation": ["director"]})
    assert response.status_code == 200
    triples = response.json()["triples"]
    assert len(triples) == 5
    assert triples[0] == {
        "head": "Q100",
        "relation": "P57",
        "tail": "Q200",
        "rendered": "Avatar | director | James Cameron",
        "score": 2,
    }


def test_search_budgets(client):
    response = client.post("/kg/search", json={"entity": ["Avatar"], "relation": ["director"], "max_triples": 2})
    assert len(response.json()["triples"]) == 2


def test_search_unknown_entity(client):
    response = client.post("/kg/search", json={"entity": ["Nobody Known"]})
    assert response.status_code == 200
    assert response.json() == {"triples": []}


@pytest.mark.parametrize(
    "payload",
    [{"entity": []}, {"relation": ["director"]}, {"entity": ["Avatar"], "max_triples": 0}],
)
def test_search_validation(client, payload):
    assert client.post("/kg/search", json=payload).status_code == 422


def test_stats(client):
    response = client.get("/kg/stats")
    assert response.status_code == 200
    assert response.json() == {"triples": 12, "entities": 8, "relations": 4}


def test_service_without_store(monkeypatch):
    monkeypatch.setattr("app.core.events.Config.KG_TRIPLE_FILES", [])
    with TestClient(create_app()) as test_client:
        assert test_client.get("/kg/stats").status_code == 503
        response = test_client.post("/kg/search", json={"entity": ["Avatar"]})
        assert response.status_code == 503
        assert response.json()["detail"] == "Knowledge store not loaded"
