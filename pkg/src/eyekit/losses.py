"""Training objectives: reconstruction, blink-score, and adversarial terms."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
import torch

from .perceptual import FeatureStack
from .world import ValidationError


@dataclass
class TrainConfig:
    lambda_pixel: float = 10.0
    lambda_lpips: float = 10.0
    lambda_blink: float = 1.0
    lambda_reg: float = 0.1
    lr_gen: float = 1e-4
    lr_disc: float = 1e-5
    adam_beta1: float = 0.0
    adam_beta2: float = 0.999
    batch_size: int = 8
    steps: int = 15000
    seed: int = 0
    perceptual_seed: int = 77
    determinism: bool = True
    log_every: int = 50
    ema_decay: float = 0.0  # generator weight EMA; 0 disables

    def validate(self) -> None:
        for name in ("lambda_pixel", "lambda_lpips", "lambda_blink", "lambda_reg"):
            if getattr(self, name) < 0:
                raise ValidationError(name, "must be >= 0")
        if self.lr_gen <= 0 or self.lr_disc <= 0:
            raise ValidationError("lr", "learning rates must be > 0")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValidationError(name, "betas must be in [0, 1)")
        if self.batch_size < 1 or self.steps < 0:
            raise ValidationError("batch_size", "batch_size >= 1, steps >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def gaze_defaults(cls, **overrides) -> "TrainConfig":
        base = dict(lambda_pixel=30.0, lambda_lpips=30.0, lambda_blink=0.0, lambda_reg=0.0)
        base.update(overrides)
        return cls(**base)


def _as_batch(img) -> torch.Tensor:
    if isinstance(img, torch.Tensor):
        t = img
    else:
        t = torch.from_numpy(np.ascontiguousarray(img))
    if t.ndim == 3:  # HWC -> 1CHW
        t = t.permute(2, 0, 1).unsqueeze(0)
    return t


def recon_loss(
    i_bc, i_gt, cfg: TrainConfig, stack: FeatureStack | None = None
) -> torch.Tensor:
    """lambda_pixel * mean |I_bc - I_gt|  +  lambda_lpips * perceptual distance."""
    a = _as_batch(i_bc)
    b = _as_batch(i_gt)
    if a.shape != b.shape:
        raise ValidationError("shape", f"mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    pixel = (a - b).abs().mean()
    if cfg.lambda_lpips == 0:
        return cfg.lambda_pixel * pixel
    if stack is None:
        stack = FeatureStack(cfg.perceptual_seed)
    if a.dtype == torch.float64 and stack.dtype != torch.float64:
        stack = stack.to_dtype(torch.float64)
    perc = stack.distance(a, b).mean()
    return cfg.lambda_pixel * pixel + cfg.lambda_lpips * perc


def score_loss(s_o, s_b, cfg: TrainConfig) -> torch.Tensor:
    """lambda_blink * |s_o - s_b|  +  lambda_reg * |s_o - 0.5|.

    The regularizer keeps predicted scores from polarizing by pulling
    them toward 0.5.
    """
    s_o = s_o if isinstance(s_o, torch.Tensor) else torch.as_tensor(float(s_o), dtype=torch.float64)
    s_b = s_b if isinstance(s_b, torch.Tensor) else torch.as_tensor(float(s_b), dtype=s_o.dtype)
    return (cfg.lambda_blink * (s_o - s_b).abs() + cfg.lambda_reg * (s_o - 0.5).abs()).mean()


def hinge_d_loss(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    """mean(max(0, 1 - real)) + mean(max(0, 1 + fake))."""
    real_logits = torch.as_tensor(real_logits)
    fake_logits = torch.as_tensor(fake_logits)
    return torch.relu(1.0 - real_logits).mean() + torch.relu(1.0 + fake_logits).mean()


def hinge_g_loss(fake_logits: torch.Tensor) -> torch.Tensor:
    """-mean(fake)."""
    return -torch.as_tensor(fake_logits).mean()


def nonsat_d_loss(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    return (
        torch.nn.functional.softplus(-real_logits).mean()
        + torch.nn.functional.softplus(fake_logits).mean()
    )


def nonsat_g_loss(fake_logits: torch.Tensor) -> torch.Tensor:
    return torch.nn.functional.softplus(-fake_logits).mean()
