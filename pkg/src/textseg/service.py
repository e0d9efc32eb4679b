"""HTTP inference service for interactive, prompt-steered segmentation.

Images are uploaded once (content-addressed by sha256, so a re-upload of
identical bytes yields the same id) and then segmented repeatedly with
different text prompts and boxes. Inference runs through a lock so one model
instance serves concurrent requests without shared-state races; responses
for identical requests are byte-identical, with wall-clock latency reported
in the ``X-Inference-Ms`` header so it never perturbs the body.
"""

from __future__ import annotations

import base64
import hashlib
import io
import os
import threading
import time

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, Field

from . import __version__
from .conditioning import GeometricPrompt
from .errors import TextsegError
from .model import (
    ModelConfig,
    TextGuidedSegmentationModel,
    load_checkpoint,
    similarity_to_grayscale,
)
from .projection import NORMALIZATIONS
from .rle import encode_mask

DEFAULT_MAX_UPLOAD_BYTES = 8 * 1024 * 1024
DEFAULT_TTL_SECONDS = 3600.0
ACCEPTED_CONTENT_TYPES = {"image/png": "PNG", "image/jpeg": "JPEG"}


class SegmentRequest(BaseModel):
    image_id: str
    prompt: str
    box: tuple[float, float, float, float] | None = None
    normalization: str | None = Field(default=None, description=f"one of {NORMALIZATIONS}")
    threshold: float | None = Field(default=None, description="logit threshold for the mask (default 0)")


class _ImageStore:
    """Content-addressed upload cache with TTL expiry."""

    def __init__(self, ttl_seconds: float):
        self.ttl = ttl_seconds
        self._items: dict[str, tuple[float, np.ndarray]] = {}
        self._lock = threading.Lock()

    def put(self, data: bytes, image: np.ndarray) -> str:
        image_id = hashlib.sha256(data).hexdigest()
        with self._lock:
            self._prune()
            self._items[image_id] = (time.monotonic(), image)
        return image_id

    def get(self, image_id: str) -> np.ndarray | None:
        with self._lock:
            self._prune()
            entry = self._items.get(image_id)
            return entry[1] if entry else None

    def _prune(self) -> None:
        deadline = time.monotonic() - self.ttl
        for key in [k for k, (t, _) in self._items.items() if t < deadline]:
            del self._items[key]


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(
    checkpoint: str | None = None,
    model: TextGuidedSegmentationModel | None = None,
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD_BYTES,
    ttl_seconds: float = DEFAULT_TTL_SECONDS,
    cors_origins: tuple[str, ...] = ("*",),
) -> FastAPI:
    """Build the service around a model (checkpoint path wins over model)."""
    if checkpoint is not None:
        model = load_checkpoint(checkpoint)
    elif model is None:
        model = TextGuidedSegmentationModel(ModelConfig())
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)

    app = FastAPI(title="textseg inference service", version=__version__)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = _ImageStore(ttl_seconds)
    infer_lock = threading.Lock()
    fingerprint = model.fingerprint()
    app.state.model = model
    app.state.store = store

    @app.post("/v1/images")
    async def upload_image(request: Request):
        content_type = (request.headers.get("content-type") or "").split(";")[0].strip().lower()
        if content_type not in ACCEPTED_CONTENT_TYPES:
            return _error(415, f"unsupported content type {content_type!r}; send image/png or image/jpeg")
        data = await request.body()
        if len(data) > max_upload_bytes:
            return _error(413, f"upload of {len(data)} bytes exceeds the {max_upload_bytes} byte limit")
        if not data:
            return _error(415, "empty request body")
        try:
            with Image.open(io.BytesIO(data)) as img:
                arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
        except (UnidentifiedImageError, OSError):
            return _error(415, "request body is not a decodable PNG/JPEG image")
        image_id = store.put(data, arr)
        return {"image_id": image_id, "height": int(arr.shape[0]), "width": int(arr.shape[1])}

    @app.post("/v1/segment")
    def segment(req: SegmentRequest):
        if not req.prompt.strip():
            return _error(422, "prompt must be a non-empty string")
        if req.normalization is not None and req.normalization not in NORMALIZATIONS:
            return _error(422, f"normalization must be one of {NORMALIZATIONS}")
        image = store.get(req.image_id)
        if image is None:
            return _error(404, f"unknown image_id {req.image_id!r}; upload via /v1/images first")
        geometric = GeometricPrompt(box=req.box) if req.box is not None else None
        started = time.perf_counter()
        try:
            with infer_lock:
                default_norm = model.config.normalization
                try:
                    if req.normalization is not None:
                        model.config.normalization = req.normalization
                    result = model.predict(image, prompt=req.prompt, geometric=geometric)
                finally:
                    model.config.normalization = default_norm
        except TextsegError as exc:
            return _error(422, str(exc))
        elapsed_ms = (time.perf_counter() - started) * 1000.0

        height, width = image.shape[:2]
        mask = result.mask if req.threshold is None else result.logits > req.threshold
        sim_gray = similarity_to_grayscale(result.similarity, height, width)
        buf = io.BytesIO()
        Image.fromarray(sim_gray).save(buf, format="PNG")
        body = {
            "mask_rle": encode_mask(mask),
            "similarity_png": base64.b64encode(buf.getvalue()).decode("ascii"),
            "best_head_score": result.head_scores.best if result.head_scores else None,
            "best_head_index": result.head_scores.best_index if result.head_scores else None,
            "height": height,
            "width": width,
            "prompt": result.prompt,
        }
        return JSONResponse(content=body, headers={"X-Inference-Ms": f"{elapsed_ms:.3f}"})

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok",
            "fingerprint": fingerprint,
            "checkpoint": checkpoint,
            "version": __version__,
        }

    return app


def app_factory() -> FastAPI:
    """Uvicorn entry point: honours the TEXTSEG_CHECKPOINT env variable."""
    return create_app(checkpoint=os.environ.get("TEXTSEG_CHECKPOINT"))
