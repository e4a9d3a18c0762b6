"""Shared conv blocks for the blink and gaze editors."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


class AdaINResBlock(nn.Module):
    """Residual block whose normalization is modulated by a style vector."""

    def __init__(self, channels: int, style_dim: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.affine1 = nn.Linear(style_dim, channels * 2)
        self.affine2 = nn.Linear(style_dim, channels * 2)
        for aff in (self.affine1, self.affine2):
            aff.bias.data[:channels] = 1.0
            aff.bias.data[channels:] = 0.0

    @staticmethod
    def _adain(x: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        mu = x.mean(dim=(2, 3), keepdim=True)
        sigma = x.std(dim=(2, 3), keepdim=True, unbiased=False) + 1e-6
        x = (x - mu) / sigma
        scale, shift = style.chunk(2, dim=-1)
        return x * scale[:, :, None, None] + shift[:, :, None, None]

    def forward(self, x: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        h = F.leaky_relu(self._adain(self.conv1(x), self.affine1(style)), 0.2)
        h = self._adain(self.conv2(h), self.affine2(style))
        return F.leaky_relu(x + h, 0.2)


class UNetEncoder(nn.Module):
    """Four stride-2 conv stages; returns bottleneck plus skip features."""

    def __init__(self, in_ch: int, chans: tuple[int, ...] = (16, 32, 48, 64)):
        super().__init__()
        self.stages = nn.ModuleList()
        prev = in_ch
        for c in chans:
            self.stages.append(nn.Conv2d(prev, c, 3, stride=2, padding=1))
            prev = c

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        h = x
        for conv in self.stages:
            h = F.leaky_relu(conv(h), 0.2)
            feats.append(h)
        return feats


class UNetDecoder(nn.Module):
    """Mirror of the encoder with skip concatenation, sigmoid output."""

    def __init__(self, out_ch: int = 3, chans: tuple[int, ...] = (16, 32, 48, 64)):
        super().__init__()
        c1, c2, c3, c4 = chans
        self.d4 = nn.Conv2d(c4 + c3, c3, 3, padding=1)
        self.d3 = nn.Conv2d(c3 + c2, c2, 3, padding=1)
        self.d2 = nn.Conv2d(c2 + c1, c1, 3, padding=1)
        self.d1 = nn.Conv2d(c1, c1, 3, padding=1)
        self.out = nn.Conv2d(c1, out_ch, 1)

    def forward(self, bottleneck: torch.Tensor, skips: list[torch.Tensor]) -> torch.Tensor:
        up = lambda t: F.interpolate(t, scale_factor=2, mode="nearest")
        h = F.leaky_relu(self.d4(torch.cat([up(bottleneck), skips[2]], dim=1)), 0.2)
        h = F.leaky_relu(self.d3(torch.cat([up(h), skips[1]], dim=1)), 0.2)
        h = F.leaky_relu(self.d2(torch.cat([up(h), skips[0]], dim=1)), 0.2)
        h = F.leaky_relu(self.d1(up(h)), 0.2)
        return torch.sigmoid(self.out(h))


class DiscTrunk(nn.Module):
    def __init__(self, in_ch: int = 3, chans: tuple[int, ...] = (16, 32, 48, 64), resolution: int = 64):
        super().__init__()
        layers = []
        prev = in_ch
        res = resolution
        for c in chans:
            layers += [nn.Conv2d(prev, c, 3, stride=2, padding=1), nn.LeakyReLU(0.2)]
            prev = c
            res //= 2
        self.net = nn.Sequential(*layers)
        self.out_dim = prev * res * res

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x).flatten(1)
