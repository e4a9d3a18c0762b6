from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).resolve().parent))

import artifacts

# Bit-exact reproducibility across runs requires a fixed thread count.
torch.set_num_threads(1)


@pytest.fixture(scope="session")
def oracle():
    return artifacts.get_oracle()


@pytest.fixture(scope="session")
def blink_dataset():
    return artifacts.get_blink_dataset()


@pytest.fixture(scope="session")
def gaze_dataset():
    return artifacts.get_gaze_dataset()


@pytest.fixture(scope="session")
def blink_model():
    return artifacts.get_blink_model()


@pytest.fixture(scope="session")
def gaze_model():
    return artifacts.get_gaze_model()


@pytest.fixture(scope="session")
def style_generator():
    return artifacts.get_style_generator()


@pytest.fixture(scope="session")
def mix_bands():
    return artifacts.get_mix_bands()


@pytest.fixture(scope="session")
def mix_blink_dataset():
    return artifacts.get_mix_blink_dataset()


@pytest.fixture(scope="session")
def mix_gaze_dataset():
    return artifacts.get_mix_gaze_dataset()


@pytest.fixture(scope="session")
def ablation_report():
    return artifacts.get_ablation_report()


def held_out_open_eyes(n: int, size: int = 64, seed: int = 777_000, gaze_max: float = 0.0):
    """Fresh procedural open eyes disjoint from every training dataset."""
    from eyekit import world

    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        ranges = world.FactorRanges.for_size(
            size,
            openness=(1.0, 1.0),
            gaze_dx=(-gaze_max, gaze_max),
            gaze_dy=(-gaze_max / 2, gaze_max / 2),
        )
        p = world.sample_params(int(rng.integers(0, 2**31)), ranges)
        img = world.render(p, seed=int(rng.integers(0, 2**31)))
        out.append((p, img))
    return out


@pytest.fixture(scope="session")
def held_out_eyes():
    return held_out_open_eyes(100)
