import numpy as np
import pytest
from fastapi.testclient import TestClient

from chaosense.service import app, create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


FAST_RD = {"system": "rdemod", "K": "3", "T": "0.2", "trials": "2"}


class TestHealth:
    def test_health(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "ok" and body["version"]

    def test_create_app_isolated(self):
        assert create_app() is not app


class TestMeasure:
    def test_chaotic_measure(self, client):
        r = client.post("/measure", json={"config": {"system": "lorenz", "K": "5"},
                                          "seed": 7})
        assert r.status_code == 200
        body = r.json()
        assert body["summary"]["M"] == 50
        assert set(body["files"]) == {"measurements.csv", "true_coeffs.csv",
                                      "config_echo.txt"}
        assert body["files"]["measurements.csv"].count("\n") >= 51

    def test_rdemod_measure(self, client):
        r = client.post("/measure", json={"config": FAST_RD, "seed": 3})
        assert r.status_code == 200
        assert r.json()["summary"]["system"] == "rdemod"

    def test_seed_determinism(self, client):
        a = client.post("/measure", json={"config": FAST_RD, "seed": 5}).json()
        b = client.post("/measure", json={"config": FAST_RD, "seed": 5}).json()
        assert a["files"] == b["files"]

    def test_unknown_system_rejected(self, client):
        r = client.post("/measure", json={"config": {"system": "henon"}})
        assert r.status_code == 400
        assert "system" in r.json()["detail"]

    def test_bad_value_rejected(self, client):
        r = client.post("/measure", json={"config": {"system": "lorenz", "K": "many"}})
        assert r.status_code == 400


class TestReconstruct:
    def test_full_seeded_trial(self, client):
        r = client.post("/reconstruct", json={"config": FAST_RD, "seed": 11})
        assert r.status_code == 200
        body = r.json()
        assert body["summary"]["err"] < 0.1
        assert body["summary"]["support_recall"] == 1.0
        assert {"estimate.csv", "diagnostics.csv"} <= set(body["files"])

    def test_from_posted_measurements(self, client):
        meas = client.post("/measure", json={"config": FAST_RD, "seed": 11}).json()
        r = client.post("/reconstruct", json={
            "config": FAST_RD, "seed": 11,
            "measurements_csv": meas["files"]["measurements.csv"],
            "truth_csv": meas["files"]["true_coeffs.csv"],
        })
        assert r.status_code == 200
        body = r.json()
        assert body["summary"]["err"] < 0.1
        assert "measurements.csv" not in body["files"]  # input, not re-emitted

    def test_diagnostics_csv_shape(self, client):
        r = client.post("/reconstruct", json={"config": FAST_RD, "seed": 2})
        lines = r.json()["files"]["diagnostics.csv"].strip().splitlines()
        assert lines[0] == "outer_iter,cost,eps,step_ratio,inner_iters"
        assert len(lines) >= 2


class TestSlle:
    def test_scan(self, client):
        r = client.post("/slle", json={
            "config": {"system": "lorenz", "obs_index": "2",
                       "T_grid": "0.2,0.4", "T_L": "20", "n_init": "8"},
            "seed": 3})
        assert r.status_code == 200
        body = r.json()
        lines = body["files"]["slle_scan.csv"].strip().splitlines()
        assert lines[0] == "T,largest_slle,crossing_flag"
        assert len(lines) == 3
        assert body["summary"]["largest_at_min_T"] < 0

    def test_rejects_rdemod(self, client):
        r = client.post("/slle", json={"config": {"system": "rdemod"}})
        assert r.status_code == 400


class TestBandwidth:
    def test_lorenz(self, client):
        r = client.post("/bandwidth", json={
            "config": {"system": "lorenz", "span": "50"}, "seed": 1})
        assert r.status_code == 200
        body = r.json()
        assert 3.0 < body["summary"]["bandwidth_98"] < 7.0
        assert body["files"]["spectrum.csv"].startswith("freq,power,cum_energy")


class TestSweep:
    def test_small_rdemod_sweep(self, client):
        r = client.post("/sweep", json={
            "config": {**FAST_RD, "K_grid": "2,4", "T_grid": "0.2"},
            "seed": 9, "workers": 1})
        assert r.status_code == 200
        body = r.json()
        assert body["summary"]["cells"] == 2
        lines = body["files"]["sweep.csv"].strip().splitlines()
        assert lines[0].startswith("system,dist,K,T,trials")
        assert len(lines) == 3
        assert set(body["files"]) == {"sweep.csv", "trials.csv", "config_echo.txt",
                                      "fig_err_vs_K.csv", "fig_err_vs_T.csv"}

    def test_config_echo_records_resolved_values(self, client):
        r = client.post("/sweep", json={"config": FAST_RD, "seed": 9})
        echo = r.json()["files"]["config_echo.txt"]
        for key in ("mu", "eps0", "lambda", "p", "err", "base_seed", "h", "W"):
            assert f"{key} = " in echo
