"""Thin command line client for the tracking service.

Without ``--server`` the commands run against the FastAPI app in-process;
with it they go over HTTP to a running ``momptrack serve`` instance.  Flags
mirror RunConfig fields; values from ``--config FILE`` override flags.
"""

from __future__ import annotations

import json

import click
import httpx

from .harness import RunConfig


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from starlette.testclient import TestClient

    from .service import app

    return TestClient(app)


def _post(server, path, payload):
    with _client(server) as client:
        resp = client.post(path, json=payload)
        if resp.status_code != 200:
            raise click.ClickException(f"{path} failed: {resp.status_code} {resp.text}")
        click.echo(json.dumps(resp.json(), indent=2))
        return resp.json()


def _config_options(fn):
    """Expose every scalar RunConfig field as a flag."""
    for name, field_info in reversed(RunConfig.model_fields.items()):
        ann = field_info.annotation
        if ann in (int, float, str, bool) or ann == str | None:
            fn = click.option(f"--{name.replace('_', '-')}", name, default=None,
                              type=bool if ann is bool else None)(fn)
    return fn


def _build_config(kwargs, config_file) -> RunConfig:
    values = {k: v for k, v in kwargs.items() if v is not None}
    if config_file:
        with open(config_file) as fh:
            values.update(json.load(fh))  # file wins over flags
    return RunConfig(**values)


@click.group()
def main():
    """Channel and position tracking experiments."""


@main.group()
def scene():
    """Scene configuration files."""


@scene.command("gen")
@click.option("--out", "out_path", required=True, help="where to write scene.json")
@click.option("--config", "config_file", default=None, help="JSON config (overrides flags)")
@click.option("--server", default=None)
@_config_options
def scene_gen(out_path, config_file, server, **kwargs):
    cfg = _build_config(kwargs, config_file)
    _post(server, "/scene/generate", {"out_path": out_path, "config": cfg.model_dump()})


@main.group()
def track():
    """Tracking runs."""


@track.command("run")
@click.option("--seed", required=True, type=int)
@click.option("--config", "config_file", default=None, help="JSON config (overrides flags)")
@click.option("--full-pipeline/--no-full-pipeline", default=False,
              help="also export the dataset, report and CDF")
@click.option("--server", default=None)
@_config_options
def track_run(seed, config_file, full_pipeline, server, **kwargs):
    kwargs["seed"] = seed
    cfg = _build_config(kwargs, config_file)
    _post(server, "/track/run", {"config": cfg.model_dump(), "full_pipeline": full_pipeline})


@main.group()
def dataset():
    """Corrector dataset files."""


@dataset.command("export")
@click.option("--run-dir", required=True)
@click.option("--c-window", default=16, type=int)
@click.option("--stride", default=25, type=int)
@click.option("--out-dir", default=None)
@click.option("--server", default=None)
def dataset_export(run_dir, c_window, stride, out_dir, server):
    _post(server, "/dataset/export", {
        "run_dir": run_dir, "c_window": c_window, "stride": stride, "out_dir": out_dir,
    })


@main.group(name="eval")
def eval_():
    """Evaluation outputs."""


@eval_.command("report")
@click.option("--run-dir", required=True)
@click.option("--corrected", "corrected_path", default=None,
              help="predictions.jsonl from the sequence corrector")
@click.option("--out", "out_path", default=None)
@click.option("--server", default=None)
def eval_report(run_dir, corrected_path, out_path, server):
    _post(server, "/eval/report", {
        "run_dir": run_dir, "corrected_path": corrected_path, "out_path": out_path,
    })


@eval_.command("cdf")
@click.option("--run-dir", required=True)
@click.option("--corrected", "corrected_path", default=None)
@click.option("--out", "out_path", default=None)
@click.option("--server", default=None)
def eval_cdf(run_dir, corrected_path, out_path, server):
    _post(server, "/eval/cdf", {
        "run_dir": run_dir, "corrected_path": corrected_path, "out_path": out_path,
    })


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
