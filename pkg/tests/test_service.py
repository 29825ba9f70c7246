import numpy as np
import pytest
from fastapi.testclient import TestClient

from sublab.metricspace import FiniteMetricSpace, space_to_csv
from sublab.service import app


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


def csv_pair():
    X = FiniteMetricSpace(["a", "b"], np.array([[0.0, 1.0], [1.0, 0.0]]))
    Y = FiniteMetricSpace(["c", "d"], np.array([[0.0, 2.0], [2.0, 0.0]]))
    return space_to_csv(X), space_to_csv(Y)


def test_health(client):
    data = client.get("/health").json()
    assert data["status"] == "ok"


def test_scenarios_listing(client):
    data = client.get("/scenarios").json()
    assert "hopf" in data["scenarios"]
    assert "product-torus" in data["scenarios"]


def test_verify_endpoint(client):
    resp = client.post("/verify", json={"scenario": "product-torus", "p": 1.0, "q": 1.0, "res": 8})
    assert resp.status_code == 200
    data = resp.json()
    assert data["passed"] is True
    assert data["verdict"] == "SUBMERSION"
    names = [c["name"] for c in data["checks"]]
    assert "lemma1_residual_i" in names
    assert "claim1_isometry" in names


def test_verify_unknown_scenario_is_400(client):
    resp = client.post("/verify", json={"scenario": "moebius", "p": 0.0, "q": 0.0})
    assert resp.status_code == 400


def test_net_endpoint(client):
    resp = client.post(
        "/net",
        json={"scenario": "product-torus", "eps": 0.8, "base_resolution": 12, "fiber_resolution": 12},
    )
    assert resp.status_code == 200
    data = resp.json()
    assert data["covering_radius"] <= 0.8
    assert data["size"] == len(data["subset"])


def test_gh_endpoint_exact_and_bound(client):
    x_csv, y_csv = csv_pair()
    resp = client.post("/gh", json={"x_csv": x_csv, "y_csv": y_csv, "exact": True})
    assert resp.status_code == 200
    assert resp.json()["value"] == 0.5
    resp = client.post("/gh", json={"x_csv": x_csv, "y_csv": y_csv, "exact": False})
    assert resp.status_code == 200
    assert resp.json()["value"] >= 0.5


def test_gh_endpoint_too_large_is_413(client):
    rng = np.random.default_rng(0)
    pts = rng.random((7, 2))
    d = np.sqrt(((pts[:, None] - pts[None, :]) ** 2).sum(-1))
    big = space_to_csv(FiniteMetricSpace([f"p{i}" for i in range(7)], d))
    resp = client.post("/gh", json={"x_csv": big, "y_csv": big, "exact": True})
    assert resp.status_code == 413


def test_collapse_endpoint(client):
    resp = client.post(
        "/collapse",
        json={
            "scenario": "product-torus",
            "base_resolution": 12,
            "fiber_resolution": 12,
            "n_list": [1, 2],
        },
    )
    assert resp.status_code == 200
    data = resp.json()
    assert [r["n"] for r in data["records"]] == [1, 2]
    assert data["records"][1]["gh_total_base"] < data["records"][0]["gh_total_base"]
    assert data["csv_text"].startswith("n,sup_f,")
    assert data["criterion_floor"] > 0


def test_collapse_hopf_rejected(client):
    resp = client.post("/collapse", json={"scenario": "hopf", "n_list": [1, 2]})
    assert resp.status_code == 400
    assert "integrable" in resp.json()["detail"].lower() or "non-integrable" in resp.json()["detail"]
