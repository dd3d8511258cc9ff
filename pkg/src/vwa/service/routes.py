"""Service endpoints wrapping the core package."""

from __future__ import annotations

import numpy as np
from fastapi import APIRouter, HTTPException

from .. import ParseError, ScheduleError, ShapeError, VwaError, __version__
from ..metrics import evaluate_model
from ..model import parse_model
from ..reports import build_report, report_to_csv, vgg16_tile_hints
from ..tensors import FixedTensor
from ..verify import random_tensors, run_network, verify_model
from .schemas import (AnalyzeRequest, AnalyzeResponse, HealthResponse,
                      RunRequest, RunResponse, VerifyRequest, VerifyResponse)

router = APIRouter()


def _parse_or_422(text: str):
    try:
        return parse_model(text)
    except ParseError as e:
        raise HTTPException(status_code=422, detail=str(e))


@router.get("/health", response_model=HealthResponse)
def health():
    return HealthResponse(status="ok", version=__version__)


@router.post("/analyze", response_model=AnalyzeResponse)
def analyze(req: AnalyzeRequest):
    model = _parse_or_422(req.model_text)
    hints = vgg16_tile_hints() if model.name == "vgg16" else {}
    if req.tile_cols is not None:
        hints = {l.name: req.tile_cols for l in model.layers}
    try:
        mm = evaluate_model(model, req.policy, req.clock_mhz * 1_000_000,
                            tile_hints=hints)
    except (ScheduleError, ShapeError) as e:
        raise HTTPException(status_code=422, detail=str(e))
    report = build_report(mm)
    csv_text = report_to_csv(report) if req.want_csv else None
    return AnalyzeResponse(report=report, csv=csv_text)


@router.post("/verify", response_model=VerifyResponse)
def verify(req: VerifyRequest):
    model = _parse_or_422(req.model_text)
    try:
        results = verify_model(model, req.seed, req.max_dims, req.policy)
    except VwaError as e:
        raise HTTPException(status_code=422, detail=str(e))
    mm = evaluate_model(model, req.policy)
    report = build_report(mm, verification=results)
    ok = all(r["status"] == "pass" for r in results)
    return VerifyResponse(report=report, all_passed=ok)


@router.post("/run", response_model=RunResponse)
def run(req: RunRequest):
    model = _parse_or_422(req.model_text)
    try:
        inp = FixedTensor.from_text(req.input_tensor)
        weights = {k: FixedTensor.from_text(v) for k, v in req.weights.items()}
        biases = {k: FixedTensor.from_text(v) for k, v in req.biases.items()}
        if req.seed is not None:
            rng = np.random.default_rng(req.seed)
            for layer in model.conv_layers:
                if layer.name not in weights:
                    _, w, b = random_tensors(layer, rng, frac=inp.frac_bits)
                    weights[layer.name] = w
                    if b is not None:
                        biases.setdefault(layer.name, b)
        out, stats = run_network(model, inp, weights, biases, req.policy)
    except VwaError as e:
        raise HTTPException(status_code=422, detail=str(e))
    mm = evaluate_model(model, req.policy, req.clock_mhz * 1_000_000)
    report = build_report(mm)
    report["functional"] = stats
    return RunResponse(output_tensor=out.to_text(), report=report)
