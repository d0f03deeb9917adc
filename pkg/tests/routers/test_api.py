import json

import pytest
from fastapi.testclient import TestClient

from app.main import app


@pytest.fixture
def client():
    return TestClient(app)


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "healthy"


def test_dashboard_origin_allowed_in_development(client):
    response = client.get("/health", headers={"Origin": "http://localhost:3000"})
    assert response.status_code == 200
    assert response.headers["access-control-allow-origin"] == "*"


class TestLocalization:
    def test_trilateration_wins(self, client):
        body = {
            "reference": {"x": 915, "y": 4055, "z": 410},
            "singles": [
                {"x": 928.7, "y": 4042.3, "z": 407.3},
                {"x": 901.3, "y": 4045.4, "z": 404.3},
                {"x": 915.0, "y": 4047.6, "z": 431.5},
            ],
            "trilaterated": {"x": 909.0, "y": 4045.9, "z": 415.5},
        }
        response = client.post("/api/analysis/localization", json=body)
        assert response.status_code == 200
        report = response.json()
        assert report["winner"] == "trilateration"
        assert report["errors"]["trilateration"] == pytest.approx(12.20, abs=0.05)

    def test_requires_three_singles(self, client):
        body = {
            "reference": {"x": 0, "y": 0, "z": 0},
            "singles": [{"x": 0, "y": 0, "z": 0}],
            "trilaterated": {"x": 0, "y": 0, "z": 0},
        }
        assert client.post("/api/analysis/localization", json=body).status_code == 422


class TestTiming:
    def test_report(self, client):
        arrivals = [[1, 3, 120_000], [1, 1, 0], [1, 2, 61_000], [1, 4, 182_000], [2, 1, 15_000], [2, 2, 75_000]]
        response = client.post("/api/analysis/timing", json={"arrivals": arrivals})
        assert response.status_code == 200
        report = response.json()
        assert report["frame_count"] == 4
        assert report["fraction_within_1ms"] == pytest.approx(0.75)
        assert report["max_error_ms"]["1"] == pytest.approx(2.0)
        assert report["ordering_ok"] is True

    def test_reproduction_interval(self, client):
        response = client.post(
            "/api/analysis/timing",
            json={"arrivals": [[1, 1, 0], [1, 2, 60_000]], "nominal_interframe_ms": 45.0},
        )
        assert response.json()["max_error_ms"]["1"] == pytest.approx(15.0)
        assert response.json()["ordering_ok"] is False

    def test_invalid_slot(self, client):
        response = client.post("/api/analysis/timing", json={"arrivals": [], "slot_ms": 0})
        assert response.status_code == 422


class TestSessions:
    def test_status_without_server(self, client):
        assert client.get("/api/sessions/status").status_code == 503

    def test_status_of_attached_server(self, client):
        class StubServer:
            def get_stats(self):
                return {"phase": "running", "next_iteration": 4}

        app.state.tracking_server = StubServer()
        try:
            response = client.get("/api/sessions/status")
        finally:
            del app.state.tracking_server
        assert response.status_code == 200
        assert response.json()["next_iteration"] == 4

    def test_missing_report(self, client, tmp_path):
        response = client.get("/api/sessions/report", params={"run_dir": str(tmp_path)})
        assert response.status_code == 404
        assert response.json()["error"] == "missing_artifact"

    def test_report(self, client, tmp_path):
        (tmp_path / "report.json").write_text(json.dumps({"trilaterated_rows": 60}))
        response = client.get("/api/sessions/report", params={"run_dir": str(tmp_path)})
        assert response.json() == {"trilaterated_rows": 60}
