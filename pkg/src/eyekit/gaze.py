"""Gaze redirection: mask-conditioned inpainting with iris style transfer.

The generator reconstructs a full eye from three inputs: the empty-eye
image (eye region blacked out), the cropped iris mask (visible iris
region), and a small scrambled iris patch acting as a pure appearance
reference.  Training is plain self-reconstruction; redirection happens
at inference by shifting the iris mask before the AND with the eye mask,
so any integer shift is a valid request.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import masks as mask_ops
from . import world
from .checkpoint import load_checkpoint, save_checkpoint, state_dict_tensors, load_state_dict
from .datasets import DatasetManifest, ManifestEntry
from .losses import TrainConfig, hinge_d_loss, hinge_g_loss, recon_loss
from .nets import AdaINResBlock, DiscTrunk, UNetDecoder, UNetEncoder
from .perceptual import FeatureStack
from .world import ValidationError

STYLE_DIM = 64
STYLE_IMAGE_SIZE = 32
CHANS = (16, 32, 48, 64)


@dataclass
class GazeInputs:
    """Preprocessed generator inputs for one eye image."""

    empty_eye: np.ndarray
    cropped_iris_mask: np.ndarray
    eye_style: np.ndarray

    def validate(self) -> None:
        if self.empty_eye.shape[:2] != self.cropped_iris_mask.shape:
            raise ValidationError("cropped_iris_mask", "mask/image dimension mismatch")
        if self.eye_style.shape[:2] != (STYLE_IMAGE_SIZE, STYLE_IMAGE_SIZE):
            raise ValidationError("eye_style", f"style image must be {STYLE_IMAGE_SIZE}x{STYLE_IMAGE_SIZE}")


def preprocess(
    img: np.ndarray,
    eye_mask: np.ndarray,
    iris_mask: np.ndarray,
    rng_seed: int,
) -> GazeInputs:
    """Empty-eye image, cropped iris mask, and scrambled eye-style patch."""
    return GazeInputs(
        empty_eye=mask_ops.empty_eye(img, eye_mask),
        cropped_iris_mask=mask_ops.and_mask(eye_mask, iris_mask),
        eye_style=mask_ops.eye_style_image(img, iris_mask, rng_seed, STYLE_IMAGE_SIZE),
    )


class StyleEncoder(nn.Module):
    """Appearance vector from the scrambled iris patch."""

    def __init__(self, dim: int = STYLE_DIM):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1), nn.LeakyReLU(0.2),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.LeakyReLU(0.2),
            nn.Conv2d(32, 64, 3, stride=2, padding=1), nn.LeakyReLU(0.2),
        )
        self.fc = nn.Linear(64, dim)

    def forward(self, style_img: torch.Tensor) -> torch.Tensor:
        h = self.net(style_img).mean(dim=(2, 3))
        return self.fc(h)


class GazeGenerator(nn.Module):
    def __init__(self, resolution: int = 64):
        super().__init__()
        self.resolution = resolution
        self.style_enc = StyleEncoder()
        self.encoder = UNetEncoder(4, CHANS)  # empty eye + mask channel
        self.res1 = AdaINResBlock(CHANS[-1], STYLE_DIM)
        self.res2 = AdaINResBlock(CHANS[-1], STYLE_DIM)
        self.decoder = UNetDecoder(3, CHANS)

    def forward(self, empty: torch.Tensor, mask: torch.Tensor, style_img: torch.Tensor) -> torch.Tensor:
        style = self.style_enc(style_img)
        feats = self.encoder(torch.cat([empty, mask], dim=1))
        h = self.res1(feats[-1], style)
        h = self.res2(h, style)
        return self.decoder(h, feats)


class GazeDiscriminator(nn.Module):
    """Unconditional hinge discriminator; the gaze loss has no score term."""

    def __init__(self, resolution: int = 64):
        super().__init__()
        self.trunk = DiscTrunk(3, CHANS, resolution)
        self.adv = nn.Linear(self.trunk.out_dim, 1)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        return self.adv(self.trunk(img)).squeeze(1)


@dataclass
class GazeModel:
    generator: GazeGenerator
    discriminator: GazeDiscriminator
    resolution: int
    train_config: dict
    manifest_hash: str = ""
    step: int = 0

    @classmethod
    def create(cls, resolution: int = 64, seed: int = 0, train_config: dict | None = None) -> "GazeModel":
        torch.manual_seed(seed)
        model = cls(
            generator=GazeGenerator(resolution),
            discriminator=GazeDiscriminator(resolution),
            resolution=resolution,
            train_config=train_config or {},
        )
        model.eval()
        return model

    def eval(self) -> None:
        self.generator.eval()
        self.discriminator.eval()

    def save(self, path) -> None:
        tensors = {}
        tensors.update(state_dict_tensors("gen", self.generator))
        tensors.update(state_dict_tensors("disc", self.discriminator))
        save_checkpoint(
            path,
            kind="gaze",
            config={"resolution": self.resolution, "train": self.train_config},
            tensors=tensors,
            train_seed=int(self.train_config.get("seed", 0)),
            manifest_hash=self.manifest_hash,
            step=self.step,
        )

    @classmethod
    def load(cls, path) -> "GazeModel":
        header, tensors = load_checkpoint(path)
        if header["kind"] != "gaze":
            raise ValueError(f"checkpoint kind {header['kind']!r} is not a gaze model")
        model = cls.create(header["config"]["resolution"], train_config=header["config"]["train"])
        load_state_dict("gen", model.generator, tensors)
        load_state_dict("disc", model.discriminator, tensors)
        model.manifest_hash = header["manifest_hash"]
        model.step = header["step"]
        model.eval()
        return model


def _tensors_for(inputs: GazeInputs):
    inputs.validate()
    empty = torch.from_numpy(np.ascontiguousarray(inputs.empty_eye)).float().permute(2, 0, 1).unsqueeze(0)
    mask = torch.from_numpy(np.ascontiguousarray(inputs.cropped_iris_mask)).float().unsqueeze(0).unsqueeze(0)
    style = torch.from_numpy(np.ascontiguousarray(inputs.eye_style)).float().permute(2, 0, 1).unsqueeze(0)
    return empty, mask, style


def generate(inputs: GazeInputs, model: GazeModel) -> np.ndarray:
    """Full eye image from preprocessed inputs; pure function of inputs."""
    empty, mask, style = _tensors_for(inputs)
    if empty.shape[-1] != model.resolution:
        raise ValidationError("image", f"expected {model.resolution}x{model.resolution} input")
    with torch.no_grad():
        out = model.generator(empty, mask, style)
    return out[0].permute(1, 2, 0).numpy().astype(np.float32)


def redirect(
    img: np.ndarray,
    eye_mask: np.ndarray,
    iris_mask: np.ndarray,
    v: mask_ops.ShiftVector,
    model: GazeModel,
    rng_seed: int = 0,
    style_donor: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Re-render the eye with the iris mask shifted by ``v``.

    Style comes from the source image's own iris unless a donor (image,
    iris_mask) pair is given.
    """
    new_mask = mask_ops.and_mask(eye_mask, mask_ops.shift_mask(iris_mask, v))
    if style_donor is None:
        style = mask_ops.eye_style_image(img, iris_mask, rng_seed, STYLE_IMAGE_SIZE)
    else:
        style = mask_ops.eye_style_image(style_donor[0], style_donor[1], rng_seed, STYLE_IMAGE_SIZE)
    inputs = GazeInputs(
        empty_eye=mask_ops.empty_eye(img, eye_mask),
        cropped_iris_mask=new_mask,
        eye_style=style,
    )
    return generate(inputs, model)


def _gaze_entries(manifest: DatasetManifest, split: str | None) -> list[ManifestEntry]:
    pool = [
        e
        for e in manifest.entries
        if e.mask_paths and e.role in ("open", "gaze") and (split is None or e.split == split)
    ]
    if not pool:
        raise ValidationError("manifest", "no mask-bearing open/gaze entries to train on")
    return pool


def train_gaze(
    manifest: DatasetManifest,
    cfg: TrainConfig,
    *,
    extra_manifest: DatasetManifest | None = None,
    out_path=None,
    loss_csv_path=None,
    log=None,
    split: str | None = "train",
) -> GazeModel:
    """Self-supervised reconstruction training with a hinge adversary.

    Every batch item is rebuilt from its own preprocess outputs, with a
    fresh seeded style augmentation each step.  ``extra_manifest`` mixes
    a second dataset in at a 1:1 sampling ratio.
    """
    cfg.validate()
    if cfg.determinism:
        torch.set_num_threads(1)
    pools = [_gaze_entries(manifest, split)]
    sources = [manifest]
    if extra_manifest is not None:
        pools.append(_gaze_entries(extra_manifest, split))
        sources.append(extra_manifest)

    cached = []
    for manifest_i, pool in zip(sources, pools):
        items = []
        for e in pool:
            img = manifest_i.image(e)
            eye_mask, iris_mask = manifest_i.masks(e)
            items.append((img, eye_mask, iris_mask))
        cached.append(items)

    resolution = cached[0][0][0].shape[0]
    torch.manual_seed(cfg.seed)
    model = GazeModel.create(resolution, seed=cfg.seed, train_config=cfg.to_dict())
    model.manifest_hash = manifest.content_hash()
    gen, disc = model.generator, model.discriminator
    gen.train()
    disc.train()
    stack = FeatureStack(cfg.perceptual_seed)
    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr_gen, betas=(cfg.adam_beta1, cfg.adam_beta2))
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr_disc, betas=(cfg.adam_beta1, cfg.adam_beta2))
    rng = np.random.default_rng(cfg.seed)
    curves = []

    def sample_batch():
        empties, msks, styles, targets = [], [], [], []
        for _ in range(cfg.batch_size):
            pool = cached[rng.integers(len(cached))]
            img, eye_mask, iris_mask = pool[rng.integers(len(pool))]
            inputs = preprocess(img, eye_mask, iris_mask, int(rng.integers(0, 2**31)))
            empties.append(inputs.empty_eye)
            msks.append(inputs.cropped_iris_mask)
            styles.append(inputs.eye_style)
            targets.append(img)
        empty = torch.from_numpy(np.stack(empties)).float().permute(0, 3, 1, 2)
        mask = torch.from_numpy(np.stack(msks)).float().unsqueeze(1)
        style = torch.from_numpy(np.stack(styles)).float().permute(0, 3, 1, 2)
        y = torch.from_numpy(np.stack(targets)).float().permute(0, 3, 1, 2)
        return empty, mask, style, y

    for step in range(cfg.steps):
        empty, mask, style, y = sample_batch()
        fake = gen(empty, mask, style)

        d_loss = hinge_d_loss(disc(y), disc(fake.detach()))
        opt_d.zero_grad()
        d_loss.backward()
        opt_d.step()

        g_adv = hinge_g_loss(disc(fake))
        g_recon = recon_loss(fake, y, cfg, stack)
        g_loss = g_adv + g_recon
        opt_g.zero_grad()
        g_loss.backward()
        opt_g.step()

        if not (torch.isfinite(d_loss) and torch.isfinite(g_loss)):
            raise RuntimeError(f"loss became non-finite at step {step}")
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            curves.append((step, g_adv.item(), d_loss.item(), g_recon.item(), 0.0))
            if log is not None:
                log(*curves[-1])

    model.step = cfg.steps
    model.eval()
    if loss_csv_path is not None:
        with open(loss_csv_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "L_adv_G", "L_adv_D", "L_recon", "L_score"])
            writer.writerows(curves)
    if out_path is not None:
        model.save(out_path)
    return model


# ---------------------------------------------------------------------------
# Evaluation and the augmentation ablation
# ---------------------------------------------------------------------------


def centroid_error(
    model: GazeModel,
    img: np.ndarray,
    eye_mask: np.ndarray,
    iris_mask: np.ndarray,
    v: mask_ops.ShiftVector,
    rng_seed: int = 0,
) -> tuple[float | None, float | None]:
    """(centroid error px, iris color error) for one redirection request."""
    new_mask = mask_ops.and_mask(eye_mask, mask_ops.shift_mask(iris_mask, v))
    out = redirect(img, eye_mask, iris_mask, v, model, rng_seed)
    ys, xs = np.nonzero(new_mask)
    if len(xs) == 0:
        return None, None
    target = (float(xs.mean()), float(ys.mean()))
    got = world.iris_centroid_oracle(out)
    cent = None if got is None else float(np.hypot(got[0] - target[0], got[1] - target[1]))
    src_color = world.mean_iris_color(img)
    out_color = out[new_mask.astype(bool)].mean(axis=0) if len(xs) else None
    color = (
        None
        if (src_color is None or out_color is None)
        else float(np.linalg.norm(out_color - src_color))
    )
    return cent, color


def evaluate_redirection(
    model: GazeModel,
    cases: list[tuple[np.ndarray, np.ndarray, np.ndarray, mask_ops.ShiftVector]],
    rng_seed: int = 0,
) -> dict:
    cents, colors, misses = [], [], 0
    for img, eye_mask, iris_mask, v in cases:
        cent, color = centroid_error(model, img, eye_mask, iris_mask, v, rng_seed)
        if cent is None:
            misses += 1
            continue
        cents.append(cent)
        if color is not None:
            colors.append(color)
    cents = np.asarray(cents)
    colors = np.asarray(colors)
    return {
        "n": len(cases),
        "centroid_err_mean": float(cents.mean()) if len(cents) else float("nan"),
        "centroid_err_p90": float(np.percentile(cents, 90)) if len(cents) else float("nan"),
        "color_err_mean": float(colors.mean()) if len(colors) else float("nan"),
        "detection_misses": misses,
    }


def ablation_protocol(
    base_manifest: DatasetManifest,
    augmented_manifest: DatasetManifest,
    cfg: TrainConfig,
    eval_cases,
    *,
    out_dir=None,
    log=None,
) -> dict:
    """Train one model per manifest with identical config/seed, evaluate
    both on the same extreme-shift cases, report metrics side by side."""
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    report_rows = {}
    for name, manifest in (("baseline", base_manifest), ("augmented", augmented_manifest)):
        model = train_gaze(manifest, cfg, log=log, split=None)
        report_rows[name] = evaluate_redirection(model, eval_cases, rng_seed=cfg.seed)
        if out_dir is not None:
            model.save(out_dir / f"gaze_{name}.ckpt")
    report = {"schema_version": 1, "config": cfg.to_dict(), "rows": report_rows}
    if out_dir is not None:
        (out_dir / "ablation.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        with open(out_dir / "ablation.csv", "w", newline="") as f:
            writer = csv.writer(f)
            cols = ["model", "n", "centroid_err_mean", "centroid_err_p90", "color_err_mean", "detection_misses"]
            writer.writerow(cols)
            for name, row in report_rows.items():
                writer.writerow([name] + [row[c] for c in cols[1:]])
    return report
