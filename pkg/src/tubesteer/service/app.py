"""FastAPI service exposing scenario runs, metrics and identification.

The CLI and these endpoints share the same handlers; the service exists
for multi-client use (parameter sweeps, dashboards) on a long-running
process.
"""

from __future__ import annotations

import dataclasses

from fastapi import FastAPI, HTTPException

from ..identify import estimate_disturbance_set
from ..metrics import compare_metrics, compute_metrics, csv_metrics
from ..outputs import parse_run_csv, run_csv_text
from ..scenario import ConfigError, parse_scenario
from ..simulate import run_scenario
from .schemas import (
    CompareRequest,
    CompareResponse,
    IdentifyRequest,
    IdentifyResponse,
    MetricsRequest,
    MetricsResponse,
    RunRequest,
    RunResponse,
)

app = FastAPI(title="tubesteer", version="0.1.0")

STATUS_BY_CODE = {0: "completed", 2: "collision", 3: "solver_failure"}


def apply_overrides(config, req: RunRequest):
    changes = {}
    if req.mode is not None:
        changes["mode"] = req.mode
    if req.seed is not None:
        changes["seed"] = req.seed
    if req.noise is not None:
        changes["sensor_noise"] = req.noise
    return dataclasses.replace(config, **changes) if changes else config


@app.get("/healthz")
def healthz():
    return {"status": "ok"}


@app.post("/run", response_model=RunResponse)
def run(req: RunRequest) -> RunResponse:
    try:
        config = apply_overrides(parse_scenario(req.scenario), req)
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    log = run_scenario(config)
    metrics = compute_metrics(log)
    return RunResponse(status=STATUS_BY_CODE[log.exit_code],
                       exit_code=log.exit_code, metrics=_clean(metrics),
                       csv=run_csv_text(log) if req.include_csv else None)


@app.post("/metrics", response_model=MetricsResponse)
def metrics(req: MetricsRequest) -> MetricsResponse:
    try:
        header, data = parse_run_csv(req.csv)
    except (ValueError, IndexError) as exc:
        raise HTTPException(status_code=422, detail=f"bad csv: {exc}")
    return MetricsResponse(metrics=_clean(csv_metrics(header, data)))


@app.post("/compare", response_model=CompareResponse)
def compare(req: CompareRequest) -> CompareResponse:
    try:
        ma = csv_metrics(*parse_run_csv(req.csv_a))
        mb = csv_metrics(*parse_run_csv(req.csv_b))
    except (ValueError, IndexError) as exc:
        raise HTTPException(status_code=422, detail=f"bad csv: {exc}")
    return CompareResponse(a=_clean(ma), b=_clean(mb),
                           deltas=_clean(compare_metrics(ma, mb)))


@app.post("/identify-w", response_model=IdentifyResponse)
def identify(req: IdentifyRequest) -> IdentifyResponse:
    try:
        configs = [parse_scenario(text, name=f"trial-{i}")
                   for i, text in enumerate(req.scenarios)]
        W, fragment = estimate_disturbance_set(configs, req.sensor_margin)
    except (ConfigError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return IdentifyResponse(w=[float(v) for v in W.half_widths], fragment=fragment)


def _clean(d: dict) -> dict:
    """JSON-safe metrics: inf/nan become strings."""
    import math

    out = {}
    for k, v in d.items():
        if isinstance(v, float) and not math.isfinite(v):
            out[k] = repr(v)
        else:
            out[k] = v
    return out
