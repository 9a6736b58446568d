import pytest
from fastapi.testclient import TestClient

from main import app
from utils.excel import XLSX_MEDIA_TYPE

POINT = {"scenarios": [1], "duration_s": 2.0, "fidelity": "point_cloud", "seed": 4,
         "classifier": False}


@pytest.fixture
def client(tmp_path):
    with TestClient(app) as c:
        app.state.workspace = tmp_path
        yield c


def test_health(client):
    assert client.get("/health").json() == {"message": "gtrack"}


def test_simulate_run_and_export(client, tmp_path):
    r = client.post("/simulate/", json={"config": POINT})
    assert r.status_code == 200
    assert r.json()["scenarios"][0]["frames"] == 20
    assert (tmp_path / "data" / "seed_4" / "scenario_1" / "truth.jsonl").exists()

    r = client.post("/run/", json={"config": POINT})
    assert r.status_code == 200
    rows = r.json()["summary"]
    assert [row["scenario"] for row in rows] == [1, "Average"]
    assert rows[0]["acc_bm"] is None
    assert 0.0 <= rows[0]["mean_ospa"] <= 1.0

    r = client.post("/export/excel", json={"config": POINT})
    assert r.status_code == 200
    assert r.headers["content-type"] == XLSX_MEDIA_TYPE
    assert "group_tracking_report_tracking_only_seed4.xlsx" in r.headers["content-disposition"]
    assert r.content[:2] == b"PK"
    saved = tmp_path / "reports" / "group_tracking_report_tracking_only_seed4.xlsx"
    assert r.content == saved.read_bytes()


def test_invalid_config_is_rejected(client):
    r = client.post("/simulate/", json={"config": {"scenarios": [7]}})
    assert r.status_code == 422


def test_missing_data_maps_to_422(client):
    r = client.post("/run/", json={"config": POINT})
    assert r.status_code == 422
    assert "simulate" in r.json()["detail"]


def test_unknown_grid_maps_to_400(client):
    r = client.post("/classifier/eval", json={"grids": ["everything"]})
    assert r.status_code == 400


def test_training_without_features_maps_to_422(client):
    r = client.post("/classifier/train", json={"methods": ["knn"]})
    assert r.status_code == 422
