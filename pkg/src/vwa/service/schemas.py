"""Pydantic request/response models for the evaluation service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class AnalyzeRequest(BaseModel):
    model_text: str
    policy: str = "adaptive"
    clock_mhz: int = Field(default=500, gt=0)
    tile_cols: int | None = None
    want_csv: bool = False


class AnalyzeResponse(BaseModel):
    report: dict
    csv: str | None = None


class VerifyRequest(BaseModel):
    model_text: str
    seed: int = 42
    max_dims: int = Field(default=16, ge=4, le=64)
    policy: str = "adaptive"


class VerifyResponse(BaseModel):
    report: dict
    all_passed: bool


class RunRequest(BaseModel):
    model_text: str
    input_tensor: str
    weights: dict[str, str] = Field(default_factory=dict)
    biases: dict[str, str] = Field(default_factory=dict)
    seed: int | None = None      # generate any missing weights/biases
    policy: str = "adaptive"
    clock_mhz: int = Field(default=500, gt=0)


class RunResponse(BaseModel):
    output_tensor: str
    report: dict


class HealthResponse(BaseModel):
    status: str
    version: str
