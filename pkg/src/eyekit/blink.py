"""Blink control: score-conditioned eye editing, training, detection.

The generator takes an open-eye image plus a blink score in [0, 1] and
re-renders the eye at that degree of closure.  The score is embedded by
a small MLP and injected through AdaIN residual blocks at the U-Net
bottleneck.  The discriminator carries two heads: a hinge adversarial
logit (projection-conditioned on the score during training) and a
sigmoid blink-score regressor, which doubles as a standalone blink
detector after training.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import masks as mask_ops
from .checkpoint import load_checkpoint, save_checkpoint, state_dict_tensors, load_state_dict
from .datasets import DatasetManifest
from .losses import TrainConfig, hinge_d_loss, hinge_g_loss, recon_loss, score_loss
from .nets import AdaINResBlock, DiscTrunk, UNetDecoder, UNetEncoder
from .perceptual import FeatureStack
from .world import ValidationError

STYLE_DIM = 64
CHANS = (16, 32, 48, 64)


class ScoreMLP(nn.Module):
    """Three-layer embedding of the scalar blink score."""

    def __init__(self, dim: int = STYLE_DIM):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(1, dim), nn.LeakyReLU(0.2),
            nn.Linear(dim, dim), nn.LeakyReLU(0.2),
            nn.Linear(dim, dim),
        )

    def forward(self, s: torch.Tensor) -> torch.Tensor:
        return self.net(s.reshape(-1, 1))


class BlinkGenerator(nn.Module):
    def __init__(self, resolution: int = 64):
        super().__init__()
        self.resolution = resolution
        self.embed = ScoreMLP()
        self.encoder = UNetEncoder(3, CHANS)
        self.res1 = AdaINResBlock(CHANS[-1], STYLE_DIM)
        self.res2 = AdaINResBlock(CHANS[-1], STYLE_DIM)
        self.decoder = UNetDecoder(3, CHANS)

    def forward(self, img: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
        style = self.embed(s)
        feats = self.encoder(img)
        h = self.res1(feats[-1], style)
        h = self.res2(h, style)
        return self.decoder(h, feats)


class BlinkDiscriminator(nn.Module):
    """Conv trunk with a projection-conditioned hinge head and a score head."""

    def __init__(self, resolution: int = 64):
        super().__init__()
        self.trunk = DiscTrunk(3, CHANS, resolution)
        self.adv = nn.Linear(self.trunk.out_dim, 1)
        self.proj_feat = nn.Linear(self.trunk.out_dim, STYLE_DIM)
        self.proj_embed = ScoreMLP()
        self.score = nn.Linear(self.trunk.out_dim, 1)

    def forward(self, img: torch.Tensor, s: torch.Tensor | None = None):
        h = self.trunk(img)
        logit = self.adv(h).squeeze(1)
        if s is not None:
            logit = logit + (self.proj_feat(h) * self.proj_embed(s)).sum(dim=1)
        s_o = torch.sigmoid(self.score(h)).squeeze(1)
        return logit, s_o


@dataclass
class BlinkModel:
    generator: BlinkGenerator
    discriminator: BlinkDiscriminator
    resolution: int
    train_config: dict
    manifest_hash: str = ""
    step: int = 0

    @classmethod
    def create(cls, resolution: int = 64, seed: int = 0, train_config: dict | None = None) -> "BlinkModel":
        torch.manual_seed(seed)
        model = cls(
            generator=BlinkGenerator(resolution),
            discriminator=BlinkDiscriminator(resolution),
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
            kind="blink",
            config={"resolution": self.resolution, "train": self.train_config},
            tensors=tensors,
            train_seed=int(self.train_config.get("seed", 0)),
            manifest_hash=self.manifest_hash,
            step=self.step,
        )

    @classmethod
    def load(cls, path) -> "BlinkModel":
        header, tensors = load_checkpoint(path)
        if header["kind"] != "blink":
            raise ValueError(f"checkpoint kind {header['kind']!r} is not a blink model")
        model = cls.create(header["config"]["resolution"], train_config=header["config"]["train"])
        load_state_dict("gen", model.generator, tensors)
        load_state_dict("disc", model.discriminator, tensors)
        model.manifest_hash = header["manifest_hash"]
        model.step = header["step"]
        model.eval()
        return model


def _to_tensor(img: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(img)).float().permute(2, 0, 1).unsqueeze(0)


def _to_image(t: torch.Tensor) -> np.ndarray:
    return t[0].detach().permute(1, 2, 0).numpy().astype(np.float32)


def _check_score(s: float) -> float:
    s = float(s)
    if not 0.0 <= s <= 1.0:
        raise ValidationError("score", f"blink score must be in [0, 1], got {s}")
    return s


def mlp_embed(model: BlinkModel, s: float) -> np.ndarray:
    """Embedding vector the AdaIN blocks consume for a given score."""
    s = _check_score(s)
    with torch.no_grad():
        e = model.generator.embed(torch.tensor([s]))
    return e[0].numpy()


def generate(img: np.ndarray, s_b: float, model: BlinkModel) -> np.ndarray:
    """Blink-controlled re-rendering of one eye image."""
    s_b = _check_score(s_b)
    if img.shape[0] != model.resolution or img.shape[1] != model.resolution:
        raise ValidationError("image", f"expected {model.resolution}x{model.resolution} input")
    with torch.no_grad():
        out = model.generator(_to_tensor(img), torch.tensor([s_b]))
    return _to_image(out)


def discriminate(img: np.ndarray, model: BlinkModel) -> tuple[float, float]:
    """(adversarial logit, predicted blink score) for one image."""
    if img.shape[0] != model.resolution or img.shape[1] != model.resolution:
        raise ValidationError("image", f"expected {model.resolution}x{model.resolution} input")
    with torch.no_grad():
        logit, s_o = model.discriminator(_to_tensor(img))
    return float(logit[0]), float(s_o[0])


def detect_blink(frames: list[np.ndarray], model: BlinkModel) -> list[float]:
    """Per-frame predicted blink scores, in input order."""
    return [discriminate(f, model)[1] for f in frames]


@dataclass
class TripleSet:
    """Training triples (input open eye, score, target) grouped by score."""

    opens: list[np.ndarray]
    closed_pairs: list[tuple[np.ndarray, np.ndarray]]
    uncertain_pairs: list[tuple[np.ndarray, np.ndarray]]

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest, split: str | None = "train") -> "TripleSet":
        ids = manifest.by_id()
        opens, closed, uncertain = [], [], []
        wanted = lambda e: split is None or e.split == split
        for e in manifest.entries:
            if e.role == "open" and wanted(e):
                opens.append(manifest.image(e))
        for e in manifest.entries:
            if e.role in ("closed", "uncertain") and wanted(e):
                if e.pair_id is None or e.pair_id not in ids:
                    raise ValidationError("pair_id", f"entry {e.id} has no resolvable open partner")
                open_img = manifest.image(ids[e.pair_id])
                item = (open_img, manifest.image(e))
                (closed if e.role == "closed" else uncertain).append(item)
        return cls(opens, closed, uncertain)

    def check_complete(self) -> None:
        for name, pool in (("open", self.opens), ("closed", self.closed_pairs), ("uncertain", self.uncertain_pairs)):
            if not pool:
                raise ValidationError("manifest", f"missing role: {name}")


def train_blink(
    manifest: DatasetManifest,
    cfg: TrainConfig,
    *,
    out_path=None,
    loss_csv_path=None,
    log=None,
    split: str | None = "train",
) -> BlinkModel:
    """Alternating G/D training over uniformly sampled score triples.

    Each step draws (I_open, 1, I_open), (I_open, 0, I_closed) or
    (I_open, 0.5, I_uncertain) with equal probability per sample.
    Returns the trained model; loss curves go to ``loss_csv_path``.
    """
    cfg.validate()
    if cfg.determinism:
        torch.set_num_threads(1)
    triples = TripleSet.from_manifest(manifest, split)
    triples.check_complete()
    resolution = triples.opens[0].shape[0]

    torch.manual_seed(cfg.seed)
    model = BlinkModel.create(resolution, seed=cfg.seed, train_config=cfg.to_dict())
    model.manifest_hash = manifest.content_hash()
    gen, disc = model.generator, model.discriminator
    gen.train()
    disc.train()
    stack = FeatureStack(cfg.perceptual_seed)
    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr_gen, betas=(cfg.adam_beta1, cfg.adam_beta2))
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr_disc, betas=(cfg.adam_beta1, cfg.adam_beta2))
    rng = np.random.default_rng(cfg.seed)
    curves = []
    ema = {k: v.detach().clone() for k, v in gen.state_dict().items()} if cfg.ema_decay > 0 else None

    def sample_batch():
        xs, ss, ys = [], [], []
        for _ in range(cfg.batch_size):
            kind = rng.integers(0, 3)
            if kind == 0:
                img = triples.opens[rng.integers(len(triples.opens))]
                xs.append(img); ss.append(1.0); ys.append(img)
            elif kind == 1:
                o, c = triples.closed_pairs[rng.integers(len(triples.closed_pairs))]
                xs.append(o); ss.append(0.0); ys.append(c)
            else:
                o, u = triples.uncertain_pairs[rng.integers(len(triples.uncertain_pairs))]
                xs.append(o); ss.append(0.5); ys.append(u)
        x = torch.from_numpy(np.stack(xs)).float().permute(0, 3, 1, 2)
        y = torch.from_numpy(np.stack(ys)).float().permute(0, 3, 1, 2)
        s = torch.tensor(ss, dtype=torch.float32)
        return x, s, y

    for step in range(cfg.steps):
        x, s, y = sample_batch()
        fake = gen(x, s)

        # Discriminator: hinge on (real vs fake | score) plus score
        # regression on both, real labels from the manifest scores.
        real_logit, real_s_o = disc(y, s)
        fake_logit, fake_s_o = disc(fake.detach(), s)
        d_adv = hinge_d_loss(real_logit, fake_logit)
        d_score = score_loss(real_s_o, s, cfg) + score_loss(fake_s_o, s, cfg)
        d_loss = d_adv + d_score
        opt_d.zero_grad()
        d_loss.backward()
        opt_d.step()

        g_logit, g_s_o = disc(fake, s)
        g_adv = hinge_g_loss(g_logit)
        g_recon = recon_loss(fake, y, cfg, stack)
        g_score = score_loss(g_s_o, s, cfg)
        g_loss = g_adv + g_recon + g_score
        opt_g.zero_grad()
        g_loss.backward()
        opt_g.step()

        if not (torch.isfinite(d_loss) and torch.isfinite(g_loss)):
            raise RuntimeError(f"loss became non-finite at step {step}")
        if ema is not None:
            with torch.no_grad():
                for k, v in gen.state_dict().items():
                    ema[k].mul_(cfg.ema_decay).add_(v, alpha=1.0 - cfg.ema_decay)
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            curves.append(
                (step, g_adv.item(), d_adv.item(), g_recon.item(), (g_score + d_score).item())
            )
            if log is not None:
                log(*curves[-1])

    if ema is not None:
        gen.load_state_dict(ema)
    model.step = cfg.steps
    model.eval()
    if loss_csv_path is not None:
        write_loss_csv(curves, loss_csv_path)
    if out_path is not None:
        model.save(out_path)
    return model


def write_loss_csv(curves, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "L_adv_G", "L_adv_D", "L_recon", "L_score"])
        writer.writerows(curves)


def paste_back(
    face: np.ndarray,
    patch: np.ndarray,
    eye_center: tuple[float, float],
    blend: mask_ops.BlendSpec,
) -> np.ndarray:
    """Place an edited eye patch back into the face with feathered blending."""
    crop_size = patch.shape[0]
    x0, y0 = mask_ops.crop_window(eye_center, crop_size)
    h, w = face.shape[:2]
    full = face.copy()
    sy0, sy1 = max(0, y0), min(h, y0 + crop_size)
    sx0, sx1 = max(0, x0), min(w, x0 + crop_size)
    if sy0 < sy1 and sx0 < sx1:
        full[sy0:sy1, sx0:sx1] = patch[sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0]
    return mask_ops.gradient_blend(face, full, blend)


def default_blend_spec(face_shape, eye_center, crop_size: int) -> mask_ops.BlendSpec:
    """Core covering the central half of the crop window, feather crop/8."""
    h, w = face_shape[:2]
    x0, y0 = mask_ops.crop_window(eye_center, crop_size)
    core = np.zeros((h, w), dtype=np.uint8)
    q = crop_size // 4
    cy0, cy1 = max(0, y0 + q), min(h, y0 + crop_size - q)
    cx0, cx1 = max(0, x0 + q), min(w, x0 + crop_size - q)
    core[cy0:cy1, cx0:cx1] = 1
    return mask_ops.BlendSpec(feather_px=max(1, crop_size // 8), core=core)


def blink_edit_face(
    face: np.ndarray,
    eye_center: tuple[float, float],
    s: float,
    model: BlinkModel,
    blend: mask_ops.BlendSpec | None = None,
) -> np.ndarray:
    """Crop the eye, re-render it at blink score ``s``, blend it back."""
    crop = mask_ops.crop_eye_centered(face, eye_center, model.resolution)
    edited = generate(crop, s, model)
    if blend is None:
        blend = default_blend_spec(face.shape, eye_center, model.resolution)
    return paste_back(face, edited, eye_center, blend)
