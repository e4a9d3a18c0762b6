"""HTTP inference service over the trained blink and gaze models.

All payloads are JSON with base64-encoded PNG images.  Checkpoints load
once at startup and are treated as immutable, so concurrent identical
requests produce identical bodies and every response is bit-identical
to the equivalent library call.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import blink as blink_mod
from . import gaze as gaze_mod
from . import pngio, world
from .checkpoint import sha256_of
from .masks import ShiftVector
from .world import ValidationError


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8787
    blink_checkpoint: Optional[str] = None
    gaze_checkpoint: Optional[str] = None
    generator_checkpoint: Optional[str] = None
    oracle_path: Optional[str] = None
    max_image_px: int = 512 * 512
    request_timeout_s: float = 30.0


class BlinkRequest(BaseModel):
    image: str
    score: float


class GazeRequest(BaseModel):
    image: str
    dx: int
    dy: int
    style_image: Optional[str] = None


class SampleRequest(BaseModel):
    seed: int
    openness: Optional[float] = None
    gaze: Optional[tuple[float, float]] = None


def _error(status: int, message: str, field: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message, "field": field})


class ServiceState:
    def __init__(self, cfg: ServiceConfig):
        self.cfg = cfg
        self.blink_model = None
        self.gaze_model = None
        self.generator = None
        self.oracle = None
        self.hashes: dict[str, Optional[str]] = {"blink": None, "gaze": None, "generator": None}

    def load(self) -> None:
        import torch

        torch.set_num_threads(1)
        if self.cfg.blink_checkpoint:
            self.blink_model = blink_mod.BlinkModel.load(self.cfg.blink_checkpoint)
            self.hashes["blink"] = sha256_of(self.cfg.blink_checkpoint)
        if self.cfg.gaze_checkpoint:
            self.gaze_model = gaze_mod.GazeModel.load(self.cfg.gaze_checkpoint)
            self.hashes["gaze"] = sha256_of(self.cfg.gaze_checkpoint)
        if self.cfg.generator_checkpoint:
            from .stylegen import StyleGenerator

            self.generator = StyleGenerator.load(self.cfg.generator_checkpoint)
            self.hashes["generator"] = sha256_of(self.cfg.generator_checkpoint)
        if self.cfg.oracle_path and Path(self.cfg.oracle_path).exists():
            self.oracle = world.OpennessOracle.load(self.cfg.oracle_path)

    @property
    def ready(self) -> bool:
        return self.blink_model is not None and self.gaze_model is not None


def create_app(cfg: ServiceConfig, *, defer_load: bool = False) -> FastAPI:
    from fastapi.middleware.cors import CORSMiddleware

    app = FastAPI(title="eyekit inference service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    state = ServiceState(cfg)
    app.state.eyekit = state
    if not defer_load:
        state.load()

    def decode_image(b64: str, field: str):
        try:
            img = pngio.image_from_base64(b64)
        except Exception:
            return None, _error(400, "could not decode base64 PNG", field)
        if img.shape[0] * img.shape[1] > cfg.max_image_px:
            return None, _error(413, f"image exceeds {cfg.max_image_px} pixels", field)
        return img, None

    @app.get("/health")
    def health():
        return {
            "status": "ok" if state.ready else "not_ready",
            "checkpoints": state.hashes,
        }

    @app.post("/blink")
    def blink_endpoint(req: BlinkRequest):
        if state.blink_model is None:
            return _error(503, "blink checkpoint not loaded", "checkpoint")
        if not 0.0 <= req.score <= 1.0:
            return _error(400, f"blink score must be in [0, 1], got {req.score}", "score")
        img, err = decode_image(req.image, "image")
        if err is not None:
            return err
        try:
            out = blink_mod.generate(img, req.score, state.blink_model)
            _, s_o = blink_mod.discriminate(out, state.blink_model)
        except ValidationError as e:
            return _error(400, str(e), e.field)
        return {"image": pngio.image_to_base64(out), "s_o": s_o}

    @app.post("/gaze")
    def gaze_endpoint(req: GazeRequest):
        if state.gaze_model is None:
            return _error(503, "gaze checkpoint not loaded", "checkpoint")
        if state.oracle is None:
            return _error(503, "openness oracle not loaded", "oracle")
        img, err = decode_image(req.image, "image")
        if err is not None:
            return err
        size = img.shape[0]
        if abs(req.dx) >= size:
            return _error(400, f"|dx| must be < {size}", "dx")
        if abs(req.dy) >= size:
            return _error(400, f"|dy| must be < {size}", "dy")
        # Masks are derived from oracle estimates: exact for procedural
        # sources, best-effort otherwise.
        params = world.estimate_params_from_image(img, state.oracle)
        eye_mask, iris_mask = world.render_masks(params)
        style_donor = None
        if req.style_image is not None:
            donor, err = decode_image(req.style_image, "style_image")
            if err is not None:
                return err
            donor_params = world.estimate_params_from_image(donor, state.oracle)
            _, donor_iris = world.render_masks(donor_params)
            if not donor_iris.any():
                return _error(400, "no iris found in style image", "style_image")
            style_donor = (donor, donor_iris)
        try:
            out = gaze_mod.redirect(
                img, eye_mask, iris_mask, ShiftVector(req.dx, req.dy),
                state.gaze_model, rng_seed=0, style_donor=style_donor,
            )
        except ValidationError as e:
            return _error(400, str(e), e.field)
        return {"image": pngio.image_to_base64(out)}

    @app.post("/sample")
    def sample_endpoint(req: SampleRequest):
        size = state.blink_model.resolution if state.blink_model else 64
        ranges = world.FactorRanges.for_size(size)
        try:
            params = world.sample_params(req.seed, ranges)
            overrides = {}
            if req.openness is not None:
                overrides["openness"] = req.openness
            else:
                overrides["openness"] = 1.0
            if req.gaze is not None:
                overrides["gaze_dx"], overrides["gaze_dy"] = req.gaze
            params = world.EyeParams(**{**params.to_dict(), **overrides})
            params.validate()
            img = world.render(params, seed=req.seed)
        except ValidationError as e:
            return _error(400, str(e), e.field)
        return {"image": pngio.image_to_base64(img)}

    return app


def run(cfg: ServiceConfig) -> None:
    import uvicorn

    app = create_app(cfg)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
