"""HTTP service wrapping the tracking harness.

Endpoints mirror the CLI verbs; the CLI talks to this app either in-process
or over the network.  Runs are synchronous: this is a desk-scale experiment
service, not a job queue.
"""

from __future__ import annotations

import os

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .harness import (
    RunConfig,
    default_scene,
    export_dataset_files,
    run_experiment,
    run_tracking,
    write_cdf,
    write_report,
)


class SceneGenRequest(BaseModel):
    out_path: str
    config: RunConfig = RunConfig()


class SceneGenResponse(BaseModel):
    path: str
    walls: int
    lanes: int


class TrackRunRequest(BaseModel):
    config: RunConfig
    full_pipeline: bool = False


class TrackRunResponse(BaseModel):
    out_dir: str
    trajectories: int
    frames: int
    atom_evaluations: int
    report_path: str | None = None


class DatasetExportRequest(BaseModel):
    run_dir: str
    c_window: int = 16
    stride: int = 25
    out_dir: str | None = None


class DatasetExportResponse(BaseModel):
    out_dir: str
    train: int
    test: int
    train_trajectories: list
    test_trajectories: list


class EvalReportRequest(BaseModel):
    run_dir: str
    corrected_path: str | None = None
    out_path: str | None = None


class EvalCdfRequest(BaseModel):
    run_dir: str
    corrected_path: str | None = None
    out_path: str | None = None


class EvalCdfResponse(BaseModel):
    path: str


def create_app() -> FastAPI:
    app = FastAPI(title="momptrack", description="channel and position tracking runs")

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/scene/generate", response_model=SceneGenResponse)
    def scene_generate(req: SceneGenRequest):
        scene = default_scene(req.config)
        os.makedirs(os.path.dirname(req.out_path) or ".", exist_ok=True)
        with open(req.out_path, "w") as fh:
            fh.write(scene.to_json())
        return SceneGenResponse(
            path=req.out_path, walls=len(scene.walls), lanes=len(scene.lanes)
        )

    @app.post("/track/run", response_model=TrackRunResponse)
    def track_run(req: TrackRunRequest):
        try:
            if req.full_pipeline:
                result = run_experiment(req.config)
                s = result["summary"]
                return TrackRunResponse(**s, report_path=result["report_path"])
            return TrackRunResponse(**run_tracking(req.config))
        except FileNotFoundError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.post("/dataset/export", response_model=DatasetExportResponse)
    def dataset_export(req: DatasetExportRequest):
        if not os.path.isdir(req.run_dir):
            raise HTTPException(status_code=400, detail=f"no run at {req.run_dir}")
        return DatasetExportResponse(
            **export_dataset_files(req.run_dir, req.c_window, req.stride, req.out_dir)
        )

    @app.post("/eval/report")
    def eval_report(req: EvalReportRequest):
        if not os.path.isdir(req.run_dir):
            raise HTTPException(status_code=400, detail=f"no run at {req.run_dir}")
        report, path = write_report(req.run_dir, req.corrected_path, req.out_path)
        return {"path": path, "report": report}

    @app.post("/eval/cdf", response_model=EvalCdfResponse)
    def eval_cdf(req: EvalCdfRequest):
        if not os.path.isdir(req.run_dir):
            raise HTTPException(status_code=400, detail=f"no run at {req.run_dir}")
        return EvalCdfResponse(
            path=write_cdf(req.run_dir, req.out_path, req.corrected_path)
        )

    return app


app = create_app()
