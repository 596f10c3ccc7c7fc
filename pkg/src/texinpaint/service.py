"""HTTP inference service.

Wraps a trained generator stack behind three endpoints: POST /inpaint
(multipart image + mask), GET /model (size/cost report) and GET /healthz.
Weights are loaded once at startup and treated as read-only, so concurrent
requests are safe and identical requests return identical results.
"""

from __future__ import annotations

import base64
import io
import logging
import os
import time
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel

from .masks import classify, hole_ratio
from .nets import GeneratorPyramid, count_efficiency, init_weights
from .trainer import load_pyramid

log = logging.getLogger(__name__)

CKPT_ENV = "TEXINPAINT_CKPT"
STATIC_ENV = "TEXINPAINT_STATIC"


class ModelInfo(BaseModel):
    params: int
    params_millions: float
    gflops: float
    stages: list[int]
    blind: bool
    global_step: Optional[int] = None
    config_hash: Optional[str] = None


class InpaintResponse(BaseModel):
    result_png: str  # base64-encoded PNG, same dimensions as the request
    pyramid_png: Optional[dict[str, str]] = None
    hole_ratio: Optional[float] = None
    bin: Optional[str] = None
    latency_ms: float
    width: int
    height: int


def _bad_request(code: str, message: str):
    raise HTTPException(status_code=400, detail={"code": code, "message": message})


def _decode_image(data: bytes, what: str) -> Image.Image:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
        return img
    except Exception as exc:
        _bad_request(f"malformed_{what}", f"could not decode {what}: {exc}")


def _encode_png(arr: np.ndarray) -> str:
    # arr: (H, W, 3) uint8
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _to_tensor(img: Image.Image) -> torch.Tensor:
    arr = np.asarray(img.convert("RGB"), dtype=np.float32).transpose(2, 0, 1)
    return torch.from_numpy(arr / 127.5 - 1.0).unsqueeze(0)


def _to_png_array(t: torch.Tensor) -> np.ndarray:
    arr = ((t.clamp(-1.0, 1.0) + 1.0) * 127.5).round().to(torch.uint8)
    return arr[0].permute(1, 2, 0).numpy()


def inpaint_tensor(
    pyramid: GeneratorPyramid,
    img_t: torch.Tensor,
    mask_t: torch.Tensor,
    use_composite: bool = True,
):
    """Run the pyramid on a (1, 3, H, W) image of any size.

    Inputs are resized to the pyramid's native resolution (nearest for the
    mask, so it stays binary), the output is resized back, and known pixels
    are composited at the original resolution when requested. Returns the
    full-size result and the raw per-stage outputs.
    """
    h, w = img_t.shape[-2:]
    native = pyramid.stages[-1]
    img_n = img_t if (h, w) == (native, native) else F.interpolate(
        img_t, (native, native), mode="bilinear", align_corners=False, antialias=True
    )
    mask_n = mask_t if (h, w) == (native, native) else F.interpolate(
        mask_t, (native, native), mode="nearest"
    )
    with torch.no_grad():
        outputs = pyramid(img_n * mask_n, mask_n)
    out = outputs.final
    if (h, w) != (native, native):
        out = F.interpolate(out, (h, w), mode="bilinear", align_corners=False, antialias=True)
    if use_composite:
        out = img_t * mask_t + out * (1.0 - mask_t)
    return out, outputs


class InpaintModel:
    """The loaded pyramid plus the bookkeeping the endpoints need."""

    def __init__(self, pyramid: GeneratorPyramid, manifest: Optional[dict] = None):
        self.pyramid = pyramid
        self.manifest = manifest or {}
        self.report = count_efficiency(
            {n: pyramid.specs[n] for n in pyramid.stages}, input_size=pyramid.stages[-1]
        )

    @classmethod
    def from_checkpoint(cls, path) -> "InpaintModel":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"checkpoint {path} not found")
        pyramid, manifest = load_pyramid(path)
        return cls(pyramid, manifest)

    @classmethod
    def random_init(cls, blind: bool = False, seed: int = 0) -> "InpaintModel":
        log.warning("serving randomly initialized weights (no checkpoint)")
        pyramid = GeneratorPyramid(blind=blind)
        init_weights(pyramid, generator=torch.Generator().manual_seed(seed))
        pyramid.eval()
        pyramid.requires_grad_(False)
        return cls(pyramid)

    def info(self) -> ModelInfo:
        return ModelInfo(
            params=self.report.total_params,
            params_millions=self.report.params_millions,
            gflops=self.report.gflops,
            stages=list(self.pyramid.stages),
            blind=self.pyramid.blind,
            global_step=self.manifest.get("global_step"),
            config_hash=self.manifest.get("config_hash"),
        )

    def run(
        self,
        image: Image.Image,
        mask: Optional[np.ndarray],
        composite: bool,
        return_pyramid: bool,
    ) -> InpaintResponse:
        w, h = image.size
        img_t = _to_tensor(image)
        if mask is not None:
            mask_t = torch.from_numpy(mask).view(1, 1, h, w)
        else:
            mask_t = torch.ones(1, 1, h, w)

        start = time.perf_counter()
        out, outputs = inpaint_tensor(
            self.pyramid, img_t, mask_t, use_composite=composite and mask is not None
        )
        latency = (time.perf_counter() - start) * 1000.0

        pyramid_png = None
        if return_pyramid:
            pyramid_png = {
                str(n): _encode_png(_to_png_array(outputs[n]))
                for n in self.pyramid.stages[:-1]
                if n in outputs
            }
        return InpaintResponse(
            result_png=_encode_png(_to_png_array(out)),
            pyramid_png=pyramid_png,
            hole_ratio=None if mask is None else hole_ratio(mask),
            bin=None if mask is None else classify(mask),
            latency_ms=latency,
            width=w,
            height=h,
        )


def create_app(ckpt: Optional[str] = None, static_dir: Optional[str] = None) -> FastAPI:
    """Build the service around one checkpoint (random weights when omitted)."""
    model = InpaintModel.from_checkpoint(ckpt) if ckpt else InpaintModel.random_init()
    app = FastAPI(title="texinpaint", version="0.1.0")

    @app.get("/healthz", response_class=PlainTextResponse)
    def healthz() -> str:
        return "ok"

    @app.get("/model", response_model=ModelInfo)
    def model_info() -> ModelInfo:
        return model.info()

    @app.post("/inpaint", response_model=InpaintResponse)
    async def inpaint(
        image: UploadFile = File(...),
        mask: Optional[UploadFile] = File(None),
        composite: bool = Form(True),
        return_pyramid: bool = Form(False),
    ) -> InpaintResponse:
        img = _decode_image(await image.read(), "image")
        mask_arr = None
        if mask is not None:
            mask_img = _decode_image(await mask.read(), "mask")
            if mask_img.size != img.size:
                _bad_request(
                    "size_mismatch",
                    f"mask {mask_img.size} does not match image {img.size}",
                )
            mask_arr = (np.asarray(mask_img.convert("L")) >= 128).astype(np.float32)
        elif not model.pyramid.blind:
            _bad_request("missing_mask", "this model requires a mask (not trained blind)")
        return model.run(img, mask_arr, composite, return_pyramid)

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="editor")
    return app


def app_factory() -> FastAPI:
    """Uvicorn factory entry point configured by environment variables."""
    return create_app(os.environ.get(CKPT_ENV) or None, os.environ.get(STATIC_ENV) or None)


def serve(ckpt: Optional[str], host: str = "127.0.0.1", port: int = 8000, static_dir: Optional[str] = None) -> None:
    import uvicorn

    uvicorn.run(create_app(ckpt, static_dir), host=host, port=port, log_level="info")
