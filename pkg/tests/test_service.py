import json
import os

import pytest
from fastapi.testclient import TestClient

from momptrack.harness import RunConfig
from momptrack.service import create_app


def tiny_config(out_dir, seed=3):
    """A configuration small enough for service round trips in seconds."""
    return RunConfig(
        seed=seed,
        n_trajectories=2,
        duration_s=0.02,
        bs_nx=8,
        bs_ny=8,
        veh_nx=6,
        veh_ny=6,
        m_track=8,
        m_initial=24,
        ia_n_angular=(32, 32, 24, 24),
        ia_n_delay=128,
        d_omega_deg=0.7,
        d_tau_ns=0.05,
        n_est=3,
        full_period=100,
        c_window=3,
        stride=4,
        out_dir=out_dir,
    )


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


@pytest.fixture(scope="module")
def run_dir(client, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("svc_run"))
    cfg = tiny_config(out)
    resp = client.post(
        "/track/run", json={"config": json.loads(cfg.model_dump_json()), "full_pipeline": True}
    )
    assert resp.status_code == 200, resp.text
    return out


class TestService:
    def test_health(self, client):
        assert client.get("/health").json() == {"status": "ok"}

    def test_scene_generate(self, client, tmp_path):
        path = str(tmp_path / "scene.json")
        resp = client.post("/scene/generate", json={"out_path": path})
        assert resp.status_code == 200
        body = resp.json()
        assert body["path"] == path
        assert body["walls"] == 2
        assert os.path.exists(path)
        scene = json.loads(open(path).read())
        assert "bs_position" in scene and "lanes" in scene

    def test_track_run_artifacts(self, client, run_dir):
        for name in ("scene.json", "traj_000", "traj_001", "traj_overlay.csv",
                     "report.json", "cdf.csv"):
            assert os.path.exists(os.path.join(run_dir, name)), name
        report = json.loads(open(os.path.join(run_dir, "report.json")).read())
        assert report["frames"] == 80
        assert "initial" in report["position_error_m"]
        assert "reference_targets" in report

    def test_dataset_export(self, client, run_dir):
        resp = client.post("/dataset/export", json={"run_dir": run_dir, "c_window": 3, "stride": 4})
        assert resp.status_code == 200
        body = resp.json()
        assert body["train"] > 0 and body["test"] > 0
        # 3:1 split by whole trajectories with two of them: one each
        assert body["train_trajectories"] == [0]
        assert body["test_trajectories"] == [1]
        line = open(os.path.join(body["out_dir"], "train.jsonl")).readline()
        sample = json.loads(line)
        assert set(sample) == {"t", "Z", "X", "target", "truth", "traj"}
        assert len(sample["Z"]) == 3 and len(sample["Z"][0]) == 3 and len(sample["Z"][0][0]) == 7
        assert len(sample["X"]) == 3 and len(sample["target"]) == 2

    def test_eval_report_deterministic_bytes(self, client, run_dir, tmp_path):
        p1, p2 = str(tmp_path / "r1.json"), str(tmp_path / "r2.json")
        for p in (p1, p2):
            resp = client.post("/eval/report", json={"run_dir": run_dir, "out_path": p})
            assert resp.status_code == 200
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_eval_cdf_monotone(self, client, run_dir, tmp_path):
        out = str(tmp_path / "cdf.csv")
        resp = client.post("/eval/cdf", json={"run_dir": run_dir, "out_path": out})
        assert resp.status_code == 200
        rows = open(out).read().strip().splitlines()[1:]
        by_method = {}
        for row in rows:
            method, err, cdf = row.split(",")
            by_method.setdefault(method, []).append((float(err), float(cdf)))
        for method, pts in by_method.items():
            errs = [e for e, _ in pts]
            cdfs = [c for _, c in pts]
            assert errs == sorted(errs)
            assert cdfs == sorted(cdfs)
            assert cdfs[-1] == pytest.approx(1.0)

    def test_bad_run_dir_rejected(self, client):
        resp = client.post("/dataset/export", json={"run_dir": "/nonexistent/xyz"})
        assert resp.status_code == 400

    def test_corrected_report_merges_predictions(self, client, run_dir, tmp_path):
        # synthesize perfect corrections from the truth files
        import momptrack.jsonio as jsonio

        preds = []
        truth = list(jsonio.read_jsonl(os.path.join(run_dir, "traj_001", "truth.jsonl")))
        for row in truth:
            preds.append({
                "traj": 1, "t": row["t"], "dx": [0.0, 0.0],
                "x_star": row["position"][:2],
            })
        pred_path = str(tmp_path / "pred.jsonl")
        jsonio.write_jsonl(pred_path, preds)
        resp = client.post("/eval/report", json={"run_dir": run_dir, "corrected_path": pred_path})
        assert resp.status_code == 200
        report = resp.json()["report"]
        assert report["corrected_frames"] == len(preds)
        assert report["position_error_m"]["corrected"]["p95"] == pytest.approx(0.0, abs=1e-12)
