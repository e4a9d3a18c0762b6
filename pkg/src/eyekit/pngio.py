"""PNG and JSON persistence with deterministic bytes.

Images are stored as 8-bit sRGB-tagged PNG (values quantized
round-to-nearest), masks as 1-bit PNG.  Identical arrays always produce
identical files, which is what makes dataset rebuilds byte-comparable.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import PngImagePlugin

from .world import EyeParams


def _srgb_info() -> PngImagePlugin.PngInfo:
    info = PngImagePlugin.PngInfo()
    info.add(b"sRGB", b"\x00")
    return info


def encode_image_png(img: np.ndarray) -> bytes:
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected HxWx3 image, got shape {arr.shape}")
    q = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(q, mode="RGB").save(buf, format="PNG", pnginfo=_srgb_info())
    return buf.getvalue()


def decode_image_png(data: bytes) -> np.ndarray:
    with PILImage.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def save_image(img: np.ndarray, path) -> None:
    Path(path).write_bytes(encode_image_png(img))


def load_image(path) -> np.ndarray:
    return decode_image_png(Path(path).read_bytes())


def encode_mask_png(mask: np.ndarray) -> bytes:
    arr = np.asarray(mask)
    if arr.ndim != 2 or not np.isin(arr, (0, 1)).all():
        raise ValueError("expected binary HxW mask")
    buf = io.BytesIO()
    PILImage.fromarray(arr.astype(bool)).save(buf, format="PNG", bits=1)
    return buf.getvalue()


def save_mask(mask: np.ndarray, path) -> None:
    Path(path).write_bytes(encode_mask_png(mask))


def load_mask(path) -> np.ndarray:
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("1"))
    return arr.astype(np.uint8)


def save_params(params: EyeParams, path) -> None:
    Path(path).write_text(json.dumps(params.to_dict(), sort_keys=True, indent=2) + "\n")


def load_params(path) -> EyeParams:
    return EyeParams.from_dict(json.loads(Path(path).read_text()))


def image_to_base64(img: np.ndarray) -> str:
    return base64.b64encode(encode_image_png(img)).decode("ascii")


def image_from_base64(data: str) -> np.ndarray:
    return decode_image_png(base64.b64decode(data))


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
