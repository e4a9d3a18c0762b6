"""Random-feature perceptual distance and feature-statistics metrics.

A fixed, seed-frozen convolutional stack stands in for a pretrained
perceptual network: three scales, channel-unit-normalized activations,
squared differences averaged per scale.  The same stack's pooled
features drive a Frechet-style distance used as a smoke metric for
generator training.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from scipy import linalg

_CHANNELS = (24, 48, 96)
_EPS = 1e-8


class FeatureStack:
    """Fixed random-weight conv features at three scales.

    Weights are drawn once from ``seed`` and never trained; the seed is
    recorded in checkpoints so the induced metric is stable.
    """

    def __init__(self, seed: int = 77, dtype: torch.dtype = torch.float32):
        gen = torch.Generator().manual_seed(seed)
        self.seed = seed
        self.weights = []
        in_ch = 3
        for out_ch in _CHANNELS:
            w = torch.randn(out_ch, in_ch, 3, 3, generator=gen, dtype=torch.float64)
            w = w * (2.0 / (in_ch * 9)) ** 0.5
            self.weights.append(w.to(dtype))
            in_ch = out_ch
        self.dtype = dtype

    def to_dtype(self, dtype: torch.dtype) -> "FeatureStack":
        clone = FeatureStack.__new__(FeatureStack)
        clone.seed = self.seed
        clone.dtype = dtype
        clone.weights = [w.to(dtype) for w in self.weights]
        return clone

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        """Per-scale feature maps for a BCHW batch in [0, 1]."""
        feats = []
        h = x.to(self.weights[0].dtype)
        for i, w in enumerate(self.weights):
            h = F.conv2d(h, w, padding=1)
            h = F.leaky_relu(h, 0.2)
            feats.append(h)
            if i < len(self.weights) - 1:
                h = F.avg_pool2d(h, 2)
        return feats

    def distance(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        """Symmetric perceptual distance between two BCHW batches."""
        fa = self.features(a)
        fb = self.features(b)
        total = None
        for xa, xb in zip(fa, fb):
            na = xa / torch.sqrt((xa * xa).sum(dim=1, keepdim=True) + _EPS)
            nb = xb / torch.sqrt((xb * xb).sum(dim=1, keepdim=True) + _EPS)
            d = ((na - nb) ** 2).mean(dim=(1, 2, 3))
            total = d if total is None else total + d
        return total / len(fa)

    def pooled(self, x: torch.Tensor) -> torch.Tensor:
        """Global-average-pooled multi-scale feature vector per sample."""
        feats = self.features(x)
        return torch.cat([f.mean(dim=(2, 3)) for f in feats], dim=1)


def perceptual_distance(stack: FeatureStack, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return stack.distance(a, b)


def pooled_features(stack: FeatureStack, imgs: np.ndarray, batch: int = 64) -> np.ndarray:
    """Pooled features for an NxHxWx3 float array."""
    out = []
    with torch.no_grad():
        for i in range(0, len(imgs), batch):
            x = torch.from_numpy(np.ascontiguousarray(imgs[i : i + batch])).permute(0, 3, 1, 2)
            out.append(stack.pooled(x.float()).double().numpy())
    return np.concatenate(out, axis=0)


def frechet_distance(feats_a: np.ndarray, feats_b: np.ndarray) -> float:
    """Frechet distance between Gaussian fits of two feature sets."""
    mu_a, mu_b = feats_a.mean(axis=0), feats_b.mean(axis=0)
    cov_a = np.cov(feats_a, rowvar=False)
    cov_b = np.cov(feats_b, rowvar=False)
    diff = mu_a - mu_b
    covmean, _ = linalg.sqrtm(cov_a @ cov_b, disp=False)
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    return float(diff @ diff + np.trace(cov_a + cov_b - 2.0 * covmean))
