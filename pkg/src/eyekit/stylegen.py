"""Toy layerwise-styled generator and the style-mixing toolchain.

A mapping MLP turns latent z into a style vector w broadcast to one row
per synthesis layer; selected rows can be swapped for another image's
rows (style mixing).  ``layer_sweep`` automates the which-layers-control
-what experiment: it mixes a reference style into every contiguous layer
band and measures the effect on eyelid openness, iris position, and
iris color through the world oracles.

Because a freshly trained toy generator has no guaranteed wiring, a
``FactorWiredGenerator`` fixture ships alongside: each style row drives
exactly one generative factor of the procedural world, which makes the
sweep's attribution exactly checkable.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, asdict, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import world
from .checkpoint import load_checkpoint, save_checkpoint, state_dict_tensors, load_state_dict
from .losses import TrainConfig, nonsat_d_loss, nonsat_g_loss
from .perceptual import FeatureStack, frechet_distance, pooled_features
from .world import ValidationError


@dataclass(frozen=True)
class GeneratorConfig:
    layers: int = 8
    d_z: int = 64
    d_w: int = 64
    base_resolution: int = 4
    out_resolution: int = 32
    mapping_depth: int = 3
    channel_base: int = 64

    def validate(self) -> None:
        if self.layers % 2 != 0 or self.layers < 2:
            raise ValidationError("layers", "layer count must be even and >= 2")
        expected = self.base_resolution * 2 ** (self.layers // 2 - 1)
        if self.out_resolution != expected:
            raise ValidationError(
                "out_resolution",
                f"must equal base_resolution * 2^(L/2 - 1) = {expected}, got {self.out_resolution}",
            )
        if self.d_z < 1 or self.d_w < 1 or self.mapping_depth < 0:
            raise ValidationError("d_z", "dimensions must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Style-vector algebra
# ---------------------------------------------------------------------------


def check_style(w: np.ndarray, layers: int | None = None) -> np.ndarray:
    w = np.asarray(w)
    if w.ndim != 2:
        raise ValidationError("style", f"expected L x d_w matrix, got shape {w.shape}")
    if layers is not None and w.shape[0] != layers:
        raise ValidationError("style", f"expected {layers} rows, got {w.shape[0]}")
    if not np.isfinite(w).all():
        raise ValidationError("style", "entries must be finite")
    return w


def style_mix(w_src: np.ndarray, w_ref: np.ndarray, layer_set) -> np.ndarray:
    """Row-wise mix: rows in ``layer_set`` (1-based) come from w_ref."""
    w_src = check_style(w_src)
    w_ref = check_style(w_ref, w_src.shape[0])
    layers = w_src.shape[0]
    idx = sorted(set(int(i) for i in layer_set))
    for i in idx:
        if not 1 <= i <= layers:
            raise ValidationError("layer_set", f"layer index {i} outside [1, {layers}]")
    out = w_src.copy()
    for i in idx:
        out[i - 1] = w_ref[i - 1]
    return out


class ExactMeanAccumulator:
    """Elementwise mean with exact float summation, mergeable without loss.

    Each coordinate keeps Shewchuk-style non-overlapping partials, so the
    accumulated sum is the exact real-number sum of its inputs.  Merging
    two accumulators concatenates exact sums; the mean of a merge is
    therefore bit-identical to the mean of the union stream, which is
    what makes the sample-size-weighted merge identity exact.
    """

    def __init__(self, shape: tuple[int, ...]):
        self.shape = tuple(shape)
        self.count = 0
        size = 1
        for s in self.shape:
            size *= s
        self._partials: list[list[float]] = [[] for _ in range(size)]

    @staticmethod
    def _grow(partials: list[float], x: float) -> None:
        i = 0
        for y in partials:
            if abs(x) < abs(y):
                x, y = y, x
            hi = x + y
            lo = y - (hi - x)
            if lo:
                partials[i] = lo
                i += 1
            x = hi
        partials[i:] = [x]

    def update(self, batch: np.ndarray) -> "ExactMeanAccumulator":
        batch = np.asarray(batch, dtype=np.float64)
        if batch.shape[1:] != self.shape:
            raise ValidationError("batch", f"expected trailing shape {self.shape}")
        flat = batch.reshape(batch.shape[0], -1)
        for row in flat:
            for j, x in enumerate(row):
                self._grow(self._partials[j], float(x))
        self.count += batch.shape[0]
        return self

    def merge(self, other: "ExactMeanAccumulator") -> "ExactMeanAccumulator":
        if other.shape != self.shape:
            raise ValidationError("shape", "accumulator shapes differ")
        out = ExactMeanAccumulator(self.shape)
        out.count = self.count + other.count
        for j in range(len(self._partials)):
            merged = list(self._partials[j])
            for x in other._partials[j]:
                self._grow(merged, x)
            out._partials[j] = merged
        return out

    @property
    def mean(self) -> np.ndarray:
        if self.count == 0:
            raise ValidationError("count", "no samples accumulated")
        sums = np.array([math.fsum(p) for p in self._partials], dtype=np.float64)
        return (sums / self.count).reshape(self.shape)


# ---------------------------------------------------------------------------
# Networks
# ---------------------------------------------------------------------------


class MappingNet(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        layers = []
        d_in = cfg.d_z
        for _ in range(cfg.mapping_depth):
            layers += [nn.Linear(d_in, cfg.d_w), nn.LeakyReLU(0.2)]
            d_in = cfg.d_w
        if not layers:
            layers = [nn.Identity()]
        self.net = nn.Sequential(*layers)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        z = z / torch.sqrt((z * z).mean(dim=-1, keepdim=True) + 1e-8)
        return self.net(z)


class ModulatedConv(nn.Module):
    """3x3 conv whose weights are scaled per-sample by a style row, then
    demodulated to unit fan-in norm.  No activation normalization, so a
    coarse style's statistics propagate through every later layer."""

    def __init__(self, in_ch: int, out_ch: int, d_w: int):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_ch, in_ch, 3, 3) * (in_ch * 9) ** -0.5)
        self.bias = nn.Parameter(torch.zeros(out_ch))
        self.affine = nn.Linear(d_w, in_ch)
        self.affine.bias.data.fill_(1.0)

    def forward(self, x: torch.Tensor, w_row: torch.Tensor) -> torch.Tensor:
        b, in_ch, h, wd = x.shape
        out_ch = self.weight.shape[0]
        style = self.affine(w_row)  # (B, in)
        weight = self.weight[None] * style[:, None, :, None, None]
        demod = torch.rsqrt((weight * weight).sum(dim=(2, 3, 4)) + 1e-8)
        weight = weight * demod[:, :, None, None, None]
        out = F.conv2d(
            x.reshape(1, b * in_ch, h, wd),
            weight.reshape(b * out_ch, in_ch, 3, 3),
            padding=1,
            groups=b,
        )
        return out.reshape(b, out_ch, h, wd) + self.bias[None, :, None, None]


class SynthesisNet(nn.Module):
    """Constant input + per-layer modulated convs, two per resolution.

    Every stage contributes its own RGB output, upsampled and summed, so
    coarse styles shape all later contributions while fine styles only
    touch the last ones.
    """

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        n_stages = cfg.layers // 2
        chans = [max(16, cfg.channel_base // 2**i) for i in range(n_stages)]
        self.const = nn.Parameter(torch.randn(1, chans[0], cfg.base_resolution, cfg.base_resolution))
        convs, to_rgbs = [], []
        in_ch = chans[0]
        for stage in range(n_stages):
            out_ch = chans[stage]
            for _ in range(2):
                convs.append(ModulatedConv(in_ch, out_ch, cfg.d_w))
                in_ch = out_ch
            to_rgbs.append(nn.Conv2d(out_ch, 3, 1))
        self.convs = nn.ModuleList(convs)
        self.to_rgbs = nn.ModuleList(to_rgbs)

    def forward(self, w: torch.Tensor) -> torch.Tensor:
        # w: (B, L, d_w)
        x = self.const.expand(w.shape[0], -1, -1, -1)
        rgb = None
        layer = 0
        n_stages = self.cfg.layers // 2
        for stage in range(n_stages):
            if stage > 0:
                x = F.interpolate(x, scale_factor=2, mode="nearest")
                rgb = F.interpolate(rgb, scale_factor=2, mode="nearest")
            for _ in range(2):
                x = F.leaky_relu(self.convs[layer](x, w[:, layer]), 0.2)
                layer += 1
            contribution = self.to_rgbs[stage](x)
            rgb = contribution if rgb is None else rgb + contribution
        return torch.sigmoid(rgb)


class ImageDisc(nn.Module):
    def __init__(self, resolution: int, channel_base: int = 64):
        super().__init__()
        layers = []
        in_ch = 3
        ch = 16
        res = resolution
        while res > 4:
            layers += [nn.Conv2d(in_ch, ch, 3, stride=2, padding=1), nn.LeakyReLU(0.2)]
            in_ch = ch
            ch = min(channel_base * 2, ch * 2)
            res //= 2
        self.trunk = nn.Sequential(*layers)
        self.head = nn.Linear(in_ch * res * res, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.trunk(x).flatten(1)).squeeze(1)


# ---------------------------------------------------------------------------
# Generator facade
# ---------------------------------------------------------------------------


class StyleGenerator:
    """Mapping + synthesis pair operating on numpy styles.

    ``mapping="identity"`` swaps the MLP for a pass-through, which is the
    debug fixture used by the w_avg statistics tests.
    """

    def __init__(self, cfg: GeneratorConfig, seed: int = 0, mapping: str = "mlp"):
        cfg.validate()
        if mapping not in ("mlp", "identity"):
            raise ValidationError("mapping", f"unknown mapping kind {mapping!r}")
        if mapping == "identity" and cfg.d_z != cfg.d_w:
            raise ValidationError("mapping", "identity mapping needs d_z == d_w")
        self.cfg = cfg
        self.mapping_kind = mapping
        torch.manual_seed(seed)
        self.mapping = MappingNet(cfg)
        self.synthesis = SynthesisNet(cfg)
        self.mapping.eval()
        self.synthesis.eval()

    @property
    def layers(self) -> int:
        return self.cfg.layers

    def sample_z(self, seed: int, n: int = 1) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return rng.standard_normal((n, self.cfg.d_z))

    def map(self, z: np.ndarray) -> np.ndarray:
        """Map one latent to a style matrix (the w row broadcast L times)."""
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        if z.shape[0] != self.cfg.d_z:
            raise ValidationError("z", f"expected dimension {self.cfg.d_z}, got {z.shape[0]}")
        if not np.isfinite(z).all():
            raise ValidationError("z", "entries must be finite")
        if self.mapping_kind == "identity":
            w = z.astype(np.float64)
        else:
            with torch.no_grad():
                w = self.mapping(torch.from_numpy(z).float().unsqueeze(0))[0].double().numpy()
        return np.repeat(w[None, :], self.cfg.layers, axis=0)

    def map_batch(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if self.mapping_kind == "identity":
            w = z
        else:
            with torch.no_grad():
                w = self.mapping(torch.from_numpy(z).float()).double().numpy()
        return np.repeat(w[:, None, :], self.cfg.layers, axis=1)

    def synthesize(self, w: np.ndarray) -> np.ndarray:
        """Deterministic image for one style matrix, HxWx3 float32."""
        w = check_style(w, self.cfg.layers)
        with torch.no_grad():
            t = torch.from_numpy(w).float().unsqueeze(0)
            img = self.synthesis(t)[0]
        return img.permute(1, 2, 0).numpy().astype(np.float32)

    def synthesize_batch(self, w: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            t = torch.from_numpy(np.asarray(w)).float()
            img = self.synthesis(t)
        return img.permute(0, 2, 3, 1).numpy().astype(np.float32)

    def compute_w_avg(self, n: int, rng_seed: int) -> np.ndarray:
        """Elementwise mean style over n prior samples, deterministic per seed."""
        if n <= 0:
            raise ValidationError("n", f"must be >= 1, got {n}")
        z = self.sample_z(rng_seed, n)
        w = self.map_batch(z)
        return w.mean(axis=0)

    def save(self, path, *, train_seed: int = 0, manifest_hash: str = "", step: int = 0) -> None:
        tensors = {}
        tensors.update(state_dict_tensors("mapping", self.mapping))
        tensors.update(state_dict_tensors("synthesis", self.synthesis))
        save_checkpoint(
            path,
            kind="stylegen",
            config={"generator": self.cfg.to_dict(), "mapping": self.mapping_kind},
            tensors=tensors,
            train_seed=train_seed,
            manifest_hash=manifest_hash,
            step=step,
        )

    @classmethod
    def load(cls, path) -> "StyleGenerator":
        header, tensors = load_checkpoint(path)
        if header["kind"] != "stylegen":
            raise ValueError(f"checkpoint kind {header['kind']!r} is not a style generator")
        cfg = GeneratorConfig(**header["config"]["generator"])
        gen = cls(cfg, mapping=header["config"]["mapping"])
        load_state_dict("mapping", gen.mapping, tensors)
        load_state_dict("synthesis", gen.synthesis, tensors)
        return gen


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"loss became non-finite at step {step}")
        self.step = step


def train_generator(
    images: np.ndarray,
    cfg: GeneratorConfig,
    train_cfg: TrainConfig,
    *,
    sample_weights: np.ndarray | None = None,
    manifest_hash: str = "",
    out_path=None,
    log=None,
) -> StyleGenerator:
    """Adversarially fit the style generator to (N, H, W, 3) images.

    Non-saturating loss, Adam on both nets.  Deterministic when
    ``train_cfg.determinism`` is set (single-threaded, seeded).
    """
    cfg.validate()
    train_cfg.validate()
    if images.shape[1] != cfg.out_resolution:
        raise ValidationError("images", f"expected resolution {cfg.out_resolution}")
    if train_cfg.determinism:
        torch.set_num_threads(1)
    torch.manual_seed(train_cfg.seed)
    gen = StyleGenerator(cfg, seed=train_cfg.seed)
    disc = ImageDisc(cfg.out_resolution)
    gen.mapping.train()
    gen.synthesis.train()
    g_params = list(gen.mapping.parameters()) + list(gen.synthesis.parameters())
    opt_g = torch.optim.Adam(g_params, lr=train_cfg.lr_gen, betas=(train_cfg.adam_beta1, train_cfg.adam_beta2))
    opt_d = torch.optim.Adam(disc.parameters(), lr=train_cfg.lr_disc, betas=(train_cfg.adam_beta1, train_cfg.adam_beta2))

    data = torch.from_numpy(np.ascontiguousarray(images)).float().permute(0, 3, 1, 2)
    rng = np.random.default_rng(train_cfg.seed)
    if sample_weights is not None:
        probs = np.asarray(sample_weights, dtype=np.float64)
        probs = probs / probs.sum()
    else:
        probs = None

    for step in range(train_cfg.steps):
        idx = rng.choice(len(data), size=train_cfg.batch_size, p=probs)
        real = data[torch.from_numpy(idx)]
        z = torch.from_numpy(rng.standard_normal((train_cfg.batch_size, cfg.d_z))).float()
        w = gen.mapping(z)
        w_rows = w.unsqueeze(1).expand(-1, cfg.layers, -1)
        fake = gen.synthesis(w_rows)

        d_loss = nonsat_d_loss(disc(real), disc(fake.detach()))
        opt_d.zero_grad()
        d_loss.backward()
        opt_d.step()

        g_loss = nonsat_g_loss(disc(fake))
        opt_g.zero_grad()
        g_loss.backward()
        opt_g.step()

        if not (torch.isfinite(d_loss) and torch.isfinite(g_loss)):
            raise TrainingDiverged(step)
        if log is not None and (step % train_cfg.log_every == 0 or step == train_cfg.steps - 1):
            log(step, g_loss.item(), d_loss.item())

    gen.mapping.eval()
    gen.synthesis.eval()
    if out_path is not None:
        gen.save(out_path, train_seed=train_cfg.seed, manifest_hash=manifest_hash, step=train_cfg.steps)
    return gen


def sample_smoke_metric(
    gen: StyleGenerator,
    real_images: np.ndarray,
    n_samples: int = 256,
    seed: int = 0,
    perceptual_seed: int = 77,
    sample_weights: np.ndarray | None = None,
) -> tuple[float, float]:
    """(generator metric, calibrated threshold).

    Threshold = 2x the Frechet feature distance between two disjoint
    halves of the real set; the generator passes below it.  When the
    generator was trained with sampling weights, pass them here so the
    real set reflects the distribution it was actually fit to.
    """
    stack = FeatureStack(perceptual_seed)
    z = gen.sample_z(seed, n_samples)
    fakes = gen.synthesize_batch(gen.map_batch(z))
    real = np.asarray(real_images, dtype=np.float32)
    rng = np.random.default_rng(seed)
    if sample_weights is not None:
        probs = np.asarray(sample_weights, dtype=np.float64)
        probs = probs / probs.sum()
        idx = rng.choice(len(real), size=2 * max(len(real), n_samples), p=probs)
        real = real[idx]
    perm = rng.permutation(len(real))
    half = len(real) // 2
    f_real = pooled_features(stack, real)
    f_fake = pooled_features(stack, fakes)
    split = frechet_distance(f_real[perm[:half]], f_real[perm[half : 2 * half]])
    metric = frechet_distance(f_real, f_fake)
    return metric, 2.0 * split


# ---------------------------------------------------------------------------
# Factor-wired fixture and the layer-attribution sweep
# ---------------------------------------------------------------------------

_WIRABLE = ("openness", "gaze_dx", "gaze_dy", "iris_hue")


class FactorWiredGenerator:
    """Debug synthesizer where chosen style rows drive world factors.

    Row values are collapsed to a scalar (mean), squashed through a
    logistic, and mapped into the wired factor's range; unwired rows are
    ignored entirely, so mixing them provably changes nothing.
    """

    def __init__(
        self,
        wiring: dict[str, int],
        layers: int = 8,
        d_w: int = 16,
        img_size: int = 64,
        base: world.EyeParams | None = None,
    ):
        for factor, row in wiring.items():
            if factor not in _WIRABLE:
                raise ValidationError("wiring", f"unknown factor {factor!r}")
            if not 1 <= row <= layers:
                raise ValidationError("wiring", f"row {row} outside [1, {layers}]")
        if len(set(wiring.values())) != len(wiring):
            raise ValidationError("wiring", "each factor needs a distinct row")
        self.wiring = dict(wiring)
        self.cfg = GeneratorConfig(
            layers=layers, d_z=d_w, d_w=d_w,
            base_resolution=img_size // 2 ** (layers // 2 - 1),
            out_resolution=img_size, mapping_depth=0,
        )
        self.layers = layers
        self.d_w = d_w
        self.img_size = img_size
        self.base = base or world.EyeParams(openness=0.8, iris_radius=0.16 * img_size, img_size=img_size)

    def sample_style(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return rng.standard_normal((self.layers, self.d_w))

    def params_for(self, w: np.ndarray) -> world.EyeParams:
        w = check_style(w, self.layers)
        values = {}
        for factor, row in self.wiring.items():
            v = 1.0 / (1.0 + np.exp(-float(w[row - 1].mean()) * 2.0))
            values[factor] = v
        p = self.base
        kw = p.to_dict()
        if "openness" in values:
            kw["openness"] = values["openness"]
        if "gaze_dx" in values:
            kw["gaze_dx"] = (values["gaze_dx"] - 0.5) * 0.16 * self.img_size
        if "gaze_dy" in values:
            kw["gaze_dy"] = (values["gaze_dy"] - 0.5) * 0.08 * self.img_size
        if "iris_hue" in values:
            kw["iris_hue"] = min(int(values["iris_hue"] * len(world.IRIS_COLORS)), len(world.IRIS_COLORS) - 1)
        return world.EyeParams(**kw)

    def synthesize(self, w: np.ndarray) -> np.ndarray:
        return world.render(self.params_for(w), seed=0)


@dataclass
class BandEffect:
    band: list[int]
    d_openness: float
    d_centroid: float
    d_color: float
    centroid_defined: int


@dataclass
class AttributionReport:
    band_size: int
    n_probes: int
    bands: list[BandEffect]
    argmax_openness: list[int]
    argmax_centroid: list[int]
    argmax_color: list[int]

    def to_json(self) -> str:
        return json.dumps(
            {
                "band_size": self.band_size,
                "n_probes": self.n_probes,
                "bands": [asdict(b) for b in self.bands],
                "argmax": {
                    "openness": self.argmax_openness,
                    "centroid": self.argmax_centroid,
                    "color": self.argmax_color,
                },
            },
            indent=2,
            sort_keys=True,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["band", "d_openness", "d_centroid", "d_color"])
        for b in self.bands:
            writer.writerow(["-".join(map(str, b.band)), b.d_openness, b.d_centroid, b.d_color])
        return buf.getvalue()


def layer_sweep(
    gen,
    w_ref: np.ndarray,
    band_size: int,
    probe_seeds,
    oracle: world.OpennessOracle,
    probe_styles: list[np.ndarray] | None = None,
) -> AttributionReport:
    """Measure per-band mixing effects through the world oracles.

    ``gen`` is anything with ``layers`` and ``synthesize(w)``; probes are
    either explicit style matrices or seeds fed to ``gen.sample_style``
    / ``map``-of-sampled-z for trained generators.
    """
    layers = gen.layers
    if band_size < 1 or band_size > layers:
        raise ValidationError("band_size", f"must be in [1, {layers}]")
    w_ref = check_style(w_ref, layers)

    if probe_styles is None:
        probe_styles = []
        for seed in probe_seeds:
            if hasattr(gen, "sample_style"):
                probe_styles.append(gen.sample_style(int(seed)))
            else:
                probe_styles.append(gen.map(gen.sample_z(int(seed))[0]))

    base_imgs = [gen.synthesize(w) for w in probe_styles]
    base_open = [oracle(im) for im in base_imgs]
    base_cent = [world.iris_centroid_oracle(im) for im in base_imgs]
    base_col = [world.mean_iris_color(im) for im in base_imgs]

    bands = []
    for lo in range(1, layers - band_size + 2):
        band = list(range(lo, lo + band_size))
        d_open, d_cent, d_col = [], [], []
        n_def = 0
        for w, im0, o0, c0, col0 in zip(probe_styles, base_imgs, base_open, base_cent, base_col):
            mixed = style_mix(w, w_ref, band)
            if np.array_equal(mixed, w):
                im1 = im0
            else:
                im1 = gen.synthesize(mixed)
            d_open.append(abs(oracle(im1) - o0))
            c1 = world.iris_centroid_oracle(im1)
            if c0 is not None and c1 is not None:
                d_cent.append(float(np.hypot(c1[0] - c0[0], c1[1] - c0[1])))
                n_def += 1
            col1 = world.mean_iris_color(im1)
            if col0 is not None and col1 is not None:
                d_col.append(float(np.linalg.norm(col1 - col0)))
        bands.append(
            BandEffect(
                band=band,
                d_openness=float(np.mean(d_open)),
                d_centroid=float(np.mean(d_cent)) if d_cent else 0.0,
                d_color=float(np.mean(d_col)) if d_col else 0.0,
                centroid_defined=n_def,
            )
        )

    def argmax(metric):
        vals = [getattr(b, metric) for b in bands]
        return bands[int(np.argmax(vals))].band

    return AttributionReport(
        band_size=band_size,
        n_probes=len(probe_styles),
        bands=bands,
        argmax_openness=argmax("d_openness"),
        argmax_centroid=argmax("d_centroid"),
        argmax_color=argmax("d_color"),
    )
