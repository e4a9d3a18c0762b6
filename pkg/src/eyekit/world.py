"""Procedural parametric eye renderer with analytic ground truth.

Every image this module produces comes with exact generative factors
(eyelid openness, iris offset, iris appearance) and analytic masks, so
downstream generative models can be scored against ground truth instead
of against pretrained parsing or landmark networks.

Geometry: the eye opening is the region between two parabolic eyelid
arcs whose vertical gap scales linearly with ``openness``.  That makes
openings strictly nested as openness grows, which is what gives us the
monotone-aperture guarantee the tests rely on.  Rendering is done at 4x
resolution with hard analytic boundaries and box-downsampled, so edges
are ~1 px anti-aliased while masks stay exact binary regions evaluated
at pixel centers.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import joblib
import numpy as np
from scipy import ndimage

# Fractions of img_size defining the fixed face geometry.
FISSURE_HALF_WIDTH_FRAC = 0.40
UPPER_LID_FRAC = 0.30
LOWER_LID_FRAC = 0.18
PUPIL_RADIUS_FRAC = 0.45  # of iris_radius
LID_SHADOW_PX = 1.5
SUPERSAMPLE = 4
NOISE_SIGMA = 0.004

# Linear-RGB palettes.  Iris colors are saturated and mid-dark; skin,
# sclera and lid-shadow colors are kept far from every iris color so a
# nearest-palette classifier can isolate iris pixels reliably.
IRIS_COLORS = np.array(
    [
        (0.16, 0.32, 0.58),  # blue
        (0.12, 0.44, 0.24),  # green
        (0.34, 0.16, 0.06),  # brown
        (0.46, 0.33, 0.08),  # hazel
        (0.33, 0.38, 0.44),  # gray
        (0.55, 0.27, 0.10),  # amber
    ],
    dtype=np.float64,
)
SKIN_TONES = np.array(
    [
        (0.96, 0.82, 0.70),
        (0.90, 0.72, 0.58),
        (0.82, 0.62, 0.48),
        (0.72, 0.54, 0.40),
        (0.62, 0.47, 0.36),
        (0.99, 0.88, 0.78),
    ],
    dtype=np.float64,
)
SCLERA_TINTS = np.array(
    [
        (0.97, 0.97, 0.94),
        (0.95, 0.93, 0.88),
        (0.93, 0.95, 0.96),
        (0.98, 0.94, 0.92),
    ],
    dtype=np.float64,
)
PUPIL_COLOR = np.array((0.05, 0.05, 0.05), dtype=np.float64)
LID_SHADOW_FACTOR = 0.80  # lid shadow = skin tone * factor

IRIS_CLASSIFY_MAX_DIST = 0.20
IRIS_MIN_PIXELS = 10


class ValidationError(ValueError):
    """Raised when a parameter record violates its invariants.

    ``field`` names the offending field.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class NotReadyError(RuntimeError):
    """Raised when an oracle is used before it has been fitted."""


@dataclass(frozen=True)
class EyeParams:
    """Ground-truth generative factors of one synthetic eye."""

    openness: float = 1.0
    gaze_dx: float = 0.0
    gaze_dy: float = 0.0
    iris_radius: float = 10.0
    iris_hue: int = 0
    iris_texture_seed: int = 0
    skin_tone: int = 0
    sclera_tint: int = 0
    img_size: int = 64

    def validate(self) -> None:
        s = self.img_size
        if s < 32 or (s & (s - 1)) != 0:
            raise ValidationError("img_size", f"must be a power of two >= 32, got {s}")
        if not 0.0 <= self.openness <= 1.0:
            raise ValidationError("openness", f"must be in [0, 1], got {self.openness}")
        if not 2.0 < self.iris_radius <= 0.35 * s:
            raise ValidationError(
                "iris_radius", f"must be in (2, {0.35 * s}], got {self.iris_radius}"
            )
        if not 0 <= self.iris_hue < len(IRIS_COLORS):
            raise ValidationError("iris_hue", f"palette index out of range: {self.iris_hue}")
        if not 0 <= self.skin_tone < len(SKIN_TONES):
            raise ValidationError("skin_tone", f"palette index out of range: {self.skin_tone}")
        if not 0 <= self.sclera_tint < len(SCLERA_TINTS):
            raise ValidationError(
                "sclera_tint", f"palette index out of range: {self.sclera_tint}"
            )
        if self.iris_texture_seed < 0:
            raise ValidationError("iris_texture_seed", "must be >= 0")
        # Keep the iris disk intersecting the opening whenever openness > 0:
        # the opening always contains the horizontal segment through the eye
        # center, so it suffices that the disk crosses that segment.
        a = FISSURE_HALF_WIDTH_FRAC * s
        if self.openness > 0.0:
            if abs(self.gaze_dy) >= self.iris_radius:
                raise ValidationError(
                    "gaze_dy", f"|gaze_dy| must stay below iris_radius ({self.iris_radius})"
                )
            if abs(self.gaze_dx) >= a:
                raise ValidationError(
                    "gaze_dx", f"|gaze_dx| must stay below the fissure half-width ({a})"
                )
        if abs(self.gaze_dx) >= s / 2 or abs(self.gaze_dy) >= s / 2:
            raise ValidationError("gaze_dx", "gaze offset must stay inside the frame")

    @property
    def eye_center(self) -> tuple[float, float]:
        c = (self.img_size - 1) / 2.0
        return (c, c)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EyeParams":
        return cls(**d)


@dataclass(frozen=True)
class FactorRanges:
    """Uniform sampling ranges for each generative factor.

    Scalar factors use inclusive (lo, hi) float ranges; palette indices
    use inclusive integer ranges.  ``img_size`` is fixed per record.
    """

    openness: tuple[float, float] = (0.0, 1.0)
    gaze_dx: tuple[float, float] = (-6.0, 6.0)
    gaze_dy: tuple[float, float] = (-3.0, 3.0)
    iris_radius: tuple[float, float] = (9.0, 12.0)
    iris_hue: tuple[int, int] = (0, len(IRIS_COLORS) - 1)
    iris_texture_seed: tuple[int, int] = (0, 9999)
    skin_tone: tuple[int, int] = (0, len(SKIN_TONES) - 1)
    sclera_tint: tuple[int, int] = (0, len(SCLERA_TINTS) - 1)
    img_size: int = 64

    @classmethod
    def for_size(cls, img_size: int, **overrides) -> "FactorRanges":
        s = img_size / 64.0
        base = dict(
            gaze_dx=(-6.0 * s, 6.0 * s),
            gaze_dy=(-3.0 * s, 3.0 * s),
            iris_radius=(9.0 * s, 12.0 * s),
            img_size=img_size,
        )
        base.update(overrides)
        return cls(**base)

    def validate(self) -> None:
        for name in (
            "openness",
            "gaze_dx",
            "gaze_dy",
            "iris_radius",
            "iris_hue",
            "iris_texture_seed",
            "skin_tone",
            "sclera_tint",
        ):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValidationError(name, f"empty range ({lo}, {hi})")
        # Ranges must only yield valid EyeParams; check the worst case.
        worst = EyeParams(
            openness=max(self.openness[1], 1e-9),
            gaze_dx=max(abs(self.gaze_dx[0]), abs(self.gaze_dx[1])),
            gaze_dy=max(abs(self.gaze_dy[0]), abs(self.gaze_dy[1])),
            iris_radius=self.iris_radius[0],
            iris_hue=self.iris_hue[1],
            iris_texture_seed=self.iris_texture_seed[1],
            skin_tone=self.skin_tone[1],
            sclera_tint=self.sclera_tint[1],
            img_size=self.img_size,
        )
        worst.validate()


def sample_params(rng_seed: int, ranges: FactorRanges | None = None) -> EyeParams:
    """Draw one EyeParams uniformly from ``ranges``, deterministic per seed."""
    if ranges is None:
        ranges = FactorRanges()
    ranges.validate()
    rng = np.random.default_rng(rng_seed)

    def unif(lo, hi):
        return float(lo) if lo == hi else float(rng.uniform(lo, hi))

    def unif_int(lo, hi):
        return int(lo) if lo == hi else int(rng.integers(lo, hi + 1))

    p = EyeParams(
        openness=unif(*ranges.openness),
        gaze_dx=unif(*ranges.gaze_dx),
        gaze_dy=unif(*ranges.gaze_dy),
        iris_radius=unif(*ranges.iris_radius),
        iris_hue=unif_int(*ranges.iris_hue),
        iris_texture_seed=unif_int(*ranges.iris_texture_seed),
        skin_tone=unif_int(*ranges.skin_tone),
        sclera_tint=unif_int(*ranges.sclera_tint),
        img_size=ranges.img_size,
    )
    p.validate()
    return p


def _lid_curves(params: EyeParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Upper/lower eyelid y-curves over x plus the in-fissure predicate."""
    s = params.img_size
    cx, cy = params.eye_center
    a = FISSURE_HALF_WIDTH_FRAC * s
    u = (x - cx) / a
    inside = np.abs(u) < 1.0
    arch = np.where(inside, 1.0 - u * u, 0.0)
    y_up = cy - params.openness * UPPER_LID_FRAC * s * arch
    y_lo = cy + params.openness * LOWER_LID_FRAC * s * arch
    return y_up, y_lo, inside


def _opening_predicate(params: EyeParams, xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
    y_up, y_lo, inside = _lid_curves(params, xx)
    if params.openness <= 0.0:
        return np.zeros_like(xx, dtype=bool)
    return inside & (yy > y_up) & (yy < y_lo)


def render(params: EyeParams, seed: int = 0) -> np.ndarray:
    """Render one eye as an HxWx3 float32 image in [0, 1].

    Deterministic for (params, seed); ``seed`` only drives a faint
    sensor-noise layer so distinct seeds give distinct but equivalent
    images.
    """
    params.validate()
    s = params.img_size
    ss = s * SUPERSAMPLE
    # Subpixel centers expressed in target-pixel coordinates.
    coords = (np.arange(ss) + 0.5) / SUPERSAMPLE - 0.5
    xx, yy = np.meshgrid(coords, coords)

    cx, cy = params.eye_center
    skin = SKIN_TONES[params.skin_tone]
    img = np.empty((ss, ss, 3), dtype=np.float64)
    img[:] = skin

    # Lid shadow: thin band on the closed side of each lid arc (and the
    # crease line when fully closed).
    y_up, y_lo, inside = _lid_curves(params, xx)
    shadow = inside & (
        ((yy <= y_up) & (yy > y_up - LID_SHADOW_PX)) | ((yy >= y_lo) & (yy < y_lo + LID_SHADOW_PX))
    )
    img[shadow] = skin * LID_SHADOW_FACTOR

    opening = _opening_predicate(params, xx, yy)
    img[opening] = SCLERA_TINTS[params.sclera_tint]

    # Iris with seeded angular streaks and a mild rim falloff.
    ix = cx + params.gaze_dx
    iy = cy + params.gaze_dy
    dx = xx - ix
    dy = yy - iy
    r = np.sqrt(dx * dx + dy * dy)
    iris_region = opening & (r <= params.iris_radius)
    trng = np.random.default_rng(params.iris_texture_seed)
    n_streaks = int(trng.integers(9, 15))
    phase = float(trng.uniform(0, 2 * np.pi))
    theta = np.arctan2(dy, dx)
    rn = np.clip(r / params.iris_radius, 0.0, 1.0)
    texture = 1.0 + 0.06 * np.sin(n_streaks * theta + phase) * rn
    texture *= 1.0 - 0.12 * rn * rn
    base = IRIS_COLORS[params.iris_hue]
    iris_rgb = np.clip(texture[..., None] * base[None, None, :], 0.0, 1.0)
    img[iris_region] = iris_rgb[iris_region]

    pupil_region = opening & (r <= PUPIL_RADIUS_FRAC * params.iris_radius)
    img[pupil_region] = PUPIL_COLOR

    # Box-average the supersampled grid down to the target resolution.
    out = img.reshape(s, SUPERSAMPLE, s, SUPERSAMPLE, 3).mean(axis=(1, 3))

    rng = np.random.default_rng(seed)
    out = out + rng.normal(0.0, NOISE_SIGMA, size=(s, s, 1))
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def render_masks(params: EyeParams) -> tuple[np.ndarray, np.ndarray]:
    """Analytic (eye_mask, iris_mask) at pixel centers, uint8 in {0, 1}.

    ``eye_mask`` is exactly the eyelid opening; ``iris_mask`` is the full
    iris disk ignoring occlusion.  Their AND is the visible iris region.
    """
    params.validate()
    s = params.img_size
    coords = np.arange(s, dtype=np.float64)
    xx, yy = np.meshgrid(coords, coords)
    eye_mask = _opening_predicate(params, xx, yy)

    cx, cy = params.eye_center
    dx = xx - (cx + params.gaze_dx)
    dy = yy - (cy + params.gaze_dy)
    iris_mask = (dx * dx + dy * dy) <= params.iris_radius**2
    return eye_mask.astype(np.uint8), iris_mask.astype(np.uint8)


def visible_iris_centroid(params: EyeParams) -> Optional[tuple[float, float]]:
    """Centroid (x, y) of the analytic visible-iris region, or None."""
    eye_mask, iris_mask = render_masks(params)
    vis = (eye_mask & iris_mask).astype(bool)
    n = int(vis.sum())
    if n == 0:
        return None
    ys, xs = np.nonzero(vis)
    return (float(xs.mean()), float(ys.mean()))


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def _palette_distances(pixels: np.ndarray, palette: np.ndarray) -> np.ndarray:
    # pixels: (N, 3), palette: (K, 3) -> (N,) min distance over K
    d = pixels[:, None, :] - palette[None, :, :]
    return np.sqrt((d * d).sum(axis=2)).min(axis=1)


def _non_iris_palette() -> np.ndarray:
    return np.concatenate(
        [
            SKIN_TONES,
            SKIN_TONES * LID_SHADOW_FACTOR,
            SCLERA_TINTS,
            PUPIL_COLOR[None, :],
        ],
        axis=0,
    )


def classify_iris_pixels(img: np.ndarray) -> np.ndarray:
    """Boolean mask of pixels whose color is nearest to the iris palette."""
    h, w = img.shape[:2]
    flat = img.reshape(-1, 3).astype(np.float64)
    d_iris = _palette_distances(flat, IRIS_COLORS)
    d_other = _palette_distances(flat, _non_iris_palette())
    mask = (d_iris < IRIS_CLASSIFY_MAX_DIST) & (d_iris < d_other)
    return mask.reshape(h, w)


def iris_centroid_oracle(img: np.ndarray) -> Optional[tuple[float, float]]:
    """Centroid (x, y) of color-classified iris pixels; None when < 10 px."""
    mask = classify_iris_pixels(img)
    n = int(mask.sum())
    if n < IRIS_MIN_PIXELS:
        return None
    ys, xs = np.nonzero(mask)
    return (float(xs.mean()), float(ys.mean()))


def mean_iris_color(img: np.ndarray) -> Optional[np.ndarray]:
    """Mean RGB over classified iris pixels; None when < 10 px."""
    mask = classify_iris_pixels(img)
    if int(mask.sum()) < IRIS_MIN_PIXELS:
        return None
    return img[mask].mean(axis=0).astype(np.float64)


def _openness_features(img: np.ndarray) -> np.ndarray:
    """Grayscale 16x16 area-average features, size independent."""
    g = img.astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    s = g.shape[0]
    if s % 16 != 0:
        raise ValidationError("img", f"size {s} not divisible by 16")
    f = s // 16
    pooled = g.reshape(16, f, 16, f).mean(axis=(1, 3))
    return pooled.reshape(-1)


class OpennessOracle:
    """Small trained regressor mapping an eye image to estimated openness.

    Fit on rendered (image, openness) pairs, with blur/noise-augmented
    copies so the estimate stays reliable on generated images.  Held-out
    MAE is recorded at fit time and asserted by the test suite.
    """

    def __init__(self):
        self.model = None
        self.mae_ = None

    def fit(
        self,
        seed: int = 0,
        n: int = 3200,
        sizes: tuple[int, ...] = (32, 64),
        augment_fraction: float = 0.4,
    ) -> "OpennessOracle":
        from sklearn.ensemble import HistGradientBoostingRegressor

        rng = np.random.default_rng(seed)
        feats, targets = [], []
        for i in range(n):
            size = int(sizes[i % len(sizes)])
            ranges = FactorRanges.for_size(size)
            p = sample_params(int(rng.integers(0, 2**31)), ranges)
            img = render(p, seed=int(rng.integers(0, 2**31)))
            if rng.uniform() < augment_fraction:
                img = ndimage.gaussian_filter(img, sigma=(rng.uniform(0.4, 1.0),) * 2 + (0,))
                img = np.clip(img + rng.normal(0, 0.015, img.shape), 0, 1)
            feats.append(_openness_features(img))
            targets.append(p.openness)
        x = np.asarray(feats)
        y = np.asarray(targets)
        n_train = int(0.85 * len(x))
        model = HistGradientBoostingRegressor(max_iter=500, random_state=0)
        model.fit(x[:n_train], y[:n_train])
        pred = np.clip(model.predict(x[n_train:]), 0.0, 1.0)
        self.mae_ = float(np.abs(pred - y[n_train:]).mean())
        self.model = model
        return self

    def __call__(self, img: np.ndarray) -> float:
        if self.model is None:
            raise NotReadyError("openness oracle used before fitting")
        pred = self.model.predict(_openness_features(img)[None, :])[0]
        return float(np.clip(pred, 0.0, 1.0))

    def predict_batch(self, imgs: list[np.ndarray]) -> np.ndarray:
        if self.model is None:
            raise NotReadyError("openness oracle used before fitting")
        x = np.asarray([_openness_features(im) for im in imgs])
        return np.clip(self.model.predict(x), 0.0, 1.0)

    def save(self, path) -> None:
        joblib.dump({"model": self.model, "mae": self.mae_}, path)

    @classmethod
    def load(cls, path) -> "OpennessOracle":
        blob = joblib.load(path)
        oracle = cls()
        oracle.model = blob["model"]
        oracle.mae_ = blob["mae"]
        return oracle


def estimate_params_from_image(img: np.ndarray, oracle: OpennessOracle) -> EyeParams:
    """Best-effort EyeParams for an image of unknown provenance.

    Used by the inference service to derive masks for uploaded images:
    openness from the trained oracle, iris center from the color
    classifier, radius from the classified pixel spread.  Exact for
    world-rendered inputs, approximate otherwise.
    """
    s = img.shape[0]
    openness = oracle(img)
    c = (s - 1) / 2.0
    centroid = iris_centroid_oracle(img)
    default_radius = 0.16 * s
    if centroid is None:
        return EyeParams(
            openness=openness, iris_radius=default_radius, img_size=s
        )
    mask = classify_iris_pixels(img)
    ys, xs = np.nonzero(mask)
    d = np.sqrt((xs - centroid[0]) ** 2 + (ys - centroid[1]) ** 2)
    # Pupil pixels are excluded by the classifier, so the visible iris is an
    # annulus; the 95th-percentile radius tracks the outer edge.
    radius = float(np.clip(np.percentile(d, 95.0) + 0.5, 4.0, 0.3 * s))
    gaze_dx = float(np.clip(centroid[0] - c, -(0.9 * radius), 0.9 * radius * 0 + 0.38 * s))
    gaze_dy = float(np.clip(centroid[1] - c, -0.9 * radius, 0.9 * radius))
    gaze_dx = float(np.clip(gaze_dx, -0.38 * s, 0.38 * s))
    p = EyeParams(
        openness=openness,
        gaze_dx=gaze_dx,
        gaze_dy=gaze_dy,
        iris_radius=radius,
        img_size=s,
    )
    try:
        p.validate()
    except ValidationError:
        p = EyeParams(openness=openness, iris_radius=default_radius, img_size=s)
    return p
