"""Binary mask algebra, eye-centered cropping, and feathered compositing.

All operations are pure functions over numpy arrays: images are HxWx3
float in [0, 1], masks are HxW uint8 in {0, 1}.  Blending uses the form
``base + alpha * (patch - base)`` so that equal inputs and the alpha
extremes reproduce their operand bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .world import ValidationError


def _check_mask(m: np.ndarray, name: str = "mask") -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValidationError(name, f"expected 2-d mask, got shape {m.shape}")
    if not np.isin(m, (0, 1)).all():
        raise ValidationError(name, "mask must be strictly binary")
    return m.astype(np.uint8)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[:2] != b.shape[:2]:
        raise ValidationError("shape", f"dimension mismatch: {a.shape} vs {b.shape}")


@dataclass(frozen=True)
class ShiftVector:
    """Integer pixel shift; positive dx is rightward, positive dy downward."""

    dx: int = 0
    dy: int = 0

    def validate(self, img_size: int) -> None:
        if abs(self.dx) >= img_size or abs(self.dy) >= img_size:
            raise ValidationError("shift", f"|shift| must be < {img_size}, got {self}")

    def inverse(self) -> "ShiftVector":
        return ShiftVector(-self.dx, -self.dy)


@dataclass(frozen=True)
class BlendSpec:
    """Feathered-paste spec: full weight on ``core``, linear falloff outside."""

    feather_px: int
    core: np.ndarray

    def validate(self) -> None:
        if self.feather_px < 0:
            raise ValidationError("feather_px", "must be >= 0")
        core = _check_mask(self.core, "core")
        if self.feather_px >= core.shape[0] / 2:
            raise ValidationError("feather_px", f"must be < img_size/2, got {self.feather_px}")


def and_mask(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = _check_mask(a, "a")
    b = _check_mask(b, "b")
    _check_same_shape(a, b)
    return (a & b).astype(np.uint8)


def shift_mask(m: np.ndarray, v: ShiftVector) -> np.ndarray:
    """Translate a mask with zero fill at the frame borders."""
    m = _check_mask(m)
    v.validate(min(m.shape))
    out = np.zeros_like(m)
    h, w = m.shape
    src_y0 = max(0, -v.dy)
    src_y1 = min(h, h - v.dy)
    src_x0 = max(0, -v.dx)
    src_x1 = min(w, w - v.dx)
    if src_y0 < src_y1 and src_x0 < src_x1:
        out[src_y0 + v.dy : src_y1 + v.dy, src_x0 + v.dx : src_x1 + v.dx] = m[
            src_y0:src_y1, src_x0:src_x1
        ]
    return out


def empty_eye(img: np.ndarray, eye_mask: np.ndarray) -> np.ndarray:
    """Black-fill the eye region; everything else is copied bit-identically."""
    img = np.asarray(img)
    eye_mask = _check_mask(eye_mask, "eye_mask")
    _check_same_shape(img, eye_mask)
    out = img.copy()
    out[eye_mask.astype(bool)] = 0.0
    return out


def crop_eye_centered(
    face: np.ndarray,
    eye_center: tuple[float, float],
    crop_size: int,
    is_left_eye: bool = False,
) -> np.ndarray:
    """crop_size x crop_size patch centered on the eye, zero-padded at frame
    overruns, horizontally mirrored for left eyes."""
    if crop_size <= 0:
        raise ValidationError("crop_size", f"must be > 0, got {crop_size}")
    face = np.asarray(face)
    h, w = face.shape[:2]
    x0 = int(round(eye_center[0])) - crop_size // 2
    y0 = int(round(eye_center[1])) - crop_size // 2
    out = np.zeros((crop_size, crop_size) + face.shape[2:], dtype=face.dtype)
    sy0, sy1 = max(0, y0), min(h, y0 + crop_size)
    sx0, sx1 = max(0, x0), min(w, x0 + crop_size)
    if sy0 < sy1 and sx0 < sx1:
        out[sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0] = face[sy0:sy1, sx0:sx1]
    if is_left_eye:
        out = out[:, ::-1].copy()
    return out


def crop_window(
    eye_center: tuple[float, float], crop_size: int
) -> tuple[int, int]:
    """Top-left (x0, y0) of the crop window used by crop_eye_centered."""
    x0 = int(round(eye_center[0])) - crop_size // 2
    y0 = int(round(eye_center[1])) - crop_size // 2
    return x0, y0


def blend_alpha(spec: BlendSpec) -> np.ndarray:
    """Alpha map: 1 on the core, linear falloff over feather_px, 0 beyond."""
    spec.validate()
    core = spec.core.astype(bool)
    if spec.feather_px == 0:
        return core.astype(np.float64)
    if not core.any():
        return np.zeros(core.shape, dtype=np.float64)
    d = ndimage.distance_transform_edt(~core)
    return np.clip(1.0 - d / spec.feather_px, 0.0, 1.0)


def gradient_blend(base: np.ndarray, patch: np.ndarray, spec: BlendSpec) -> np.ndarray:
    base = np.asarray(base)
    patch = np.asarray(patch)
    _check_same_shape(base, patch)
    _check_same_shape(base, spec.core)
    alpha = blend_alpha(spec)
    if base.ndim == 3:
        alpha = alpha[..., None]
    out = base + alpha * (patch.astype(np.float64) - base.astype(np.float64))
    out = np.where(alpha >= 1.0, patch, np.where(alpha <= 0.0, base, out))
    return out.astype(base.dtype) if base.dtype == np.float32 else out


def eye_style_image(
    img: np.ndarray,
    iris_mask: np.ndarray,
    rng_seed: int,
    out_size: int = 32,
) -> np.ndarray:
    """Iris-only style patch: seeded random rotation and scale on a black
    canvas, carrying appearance but no position or structure.

    The iris bounding square is mapped to 0.8 of the canvas at scale 1,
    then scaled by a uniform factor in [0.8, 1.25] and rotated uniformly
    in [-180, 180) degrees.  Pixels outside the transformed iris support
    are exactly zero.
    """
    img = np.asarray(img, dtype=np.float64)
    iris_mask = _check_mask(iris_mask, "iris_mask")
    _check_same_shape(img, iris_mask)
    if not iris_mask.any():
        raise ValidationError("iris_mask", "empty iris mask")

    rng = np.random.default_rng(rng_seed)
    angle = float(rng.uniform(-np.pi, np.pi))
    scale = float(rng.uniform(0.8, 1.25))

    ys, xs = np.nonzero(iris_mask)
    cy_src = (ys.min() + ys.max()) / 2.0
    cx_src = (xs.min() + xs.max()) / 2.0
    side = max(ys.max() - ys.min(), xs.max() - xs.min()) + 1.0

    # Output pixel -> source pixel (inverse map): undo scale, then rotation,
    # about the respective centers.
    zoom = (0.8 * out_size / side) * scale
    c_out = (out_size - 1) / 2.0
    jj, ii = np.meshgrid(np.arange(out_size), np.arange(out_size))
    u = (jj - c_out) / zoom
    v = (ii - c_out) / zoom
    cos_a, sin_a = np.cos(-angle), np.sin(-angle)
    src_x = cx_src + cos_a * u - sin_a * v
    src_y = cy_src + sin_a * u + cos_a * v

    masked = img * iris_mask[..., None]
    out = _bilinear_sample(masked, src_x, src_y)
    support = _nearest_sample(iris_mask.astype(np.float64), src_x, src_y) > 0.5
    out[~support] = 0.0
    return out.astype(np.float32)


def _bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    fx = x - x0
    fy = y - y0

    def at(yy, xx):
        valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        yy_c = np.clip(yy, 0, h - 1)
        xx_c = np.clip(xx, 0, w - 1)
        vals = img[yy_c, xx_c]
        vals[~valid] = 0.0
        return vals

    wa = ((1 - fx) * (1 - fy))[..., None]
    wb = (fx * (1 - fy))[..., None]
    wc = ((1 - fx) * fy)[..., None]
    wd = (fx * fy)[..., None]
    return wa * at(y0, x0) + wb * at(y0, x0 + 1) + wc * at(y0 + 1, x0) + wd * at(y0 + 1, x0 + 1)


def _nearest_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    xi = np.rint(x).astype(int)
    yi = np.rint(y).astype(int)
    valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
    out = np.zeros(x.shape, dtype=img.dtype)
    out[valid] = img[yi[valid], xi[valid]]
    return out
