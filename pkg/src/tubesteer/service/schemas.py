"""Request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class RunRequest(BaseModel):
    scenario: str = Field(description="scenario file content (INI text)")
    mode: str | None = Field(default=None, description="override: rmpc | dmpc")
    seed: int | None = None
    noise: bool | None = Field(default=None, description="override sensor noise")
    include_csv: bool = True


class RunResponse(BaseModel):
    status: str                 # completed | collision | solver_failure
    exit_code: int
    metrics: dict
    csv: str | None = None


class MetricsRequest(BaseModel):
    csv: str


class MetricsResponse(BaseModel):
    metrics: dict


class CompareRequest(BaseModel):
    csv_a: str
    csv_b: str


class CompareResponse(BaseModel):
    a: dict
    b: dict
    deltas: dict


class IdentifyRequest(BaseModel):
    scenarios: list[str] = Field(description="trial scenario file contents")
    sensor_margin: list[float] | None = Field(
        default=None, description="additive per-state measurement margin (5 values)")


class IdentifyResponse(BaseModel):
    w: list[float]
    fragment: str
