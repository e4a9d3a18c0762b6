"""Build-or-load cached desk-scale artifacts for the test suite.

Trained checkpoints, fitted oracles, and datasets are expensive, so they
are built once into ``.cache/`` at the repository root and reused across
pytest runs.  Deleting the cache forces a full rebuild (roughly an hour
on a 2-core CPU box).  Run ``python tests/artifacts.py`` to prebuild.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

CACHE = Path(__file__).resolve().parent.parent / ".cache"

BLINK_STEPS = 25000
GAZE_STEPS = 15000
ABLATION_STEPS = 6000
GAN_STEPS = 12000

BLINK_TRIPLES = 250
GAZE_TRIPLES = 500
ABLATION_TRIPLES = 250
GAN_TRIPLES = 300

EXTREME_SHIFTS = (-12, -10, -8, 8, 10, 12)


def _stamp(name: str) -> Path:
    return CACHE / f"{name}.done"


def _log(msg: str) -> None:
    print(f"[artifacts {time.strftime('%H:%M:%S')}] {msg}", flush=True)


def get_oracle():
    from eyekit.world import OpennessOracle

    CACHE.mkdir(exist_ok=True)
    path = CACHE / "oracle.joblib"
    if not path.exists():
        _log("fitting openness oracle")
        oracle = OpennessOracle().fit(seed=0)
        oracle.save(path)
    return OpennessOracle.load(path)


def get_blink_dataset():
    from eyekit import datasets, world

    out = CACHE / "data" / "blink_proc"
    if not (out / "manifest.json").exists():
        _log(f"building procedural blink dataset ({BLINK_TRIPLES} triples)")
        datasets.build_procedural_pairs(
            BLINK_TRIPLES, 42, out, world.FactorRanges.for_size(64)
        )
    return datasets.DatasetManifest.load(out / "manifest.json")


def get_gaze_dataset():
    from eyekit import datasets, world

    out = CACHE / "data" / "gaze_proc"
    if not (out / "manifest.json").exists():
        _log(f"building procedural gaze dataset ({GAZE_TRIPLES} triples)")
        ranges = world.FactorRanges.for_size(
            64, gaze_dx=(-12.0, 12.0), gaze_dy=(-6.0, 6.0)
        )
        datasets.build_procedural_pairs(GAZE_TRIPLES, 43, out, ranges)
    return datasets.DatasetManifest.load(out / "manifest.json")


def get_blink_model():
    from eyekit.blink import BlinkModel, train_blink
    from eyekit.losses import TrainConfig

    path = CACHE / "blink.ckpt"
    if not path.exists():
        manifest = get_blink_dataset()
        cfg = TrainConfig(steps=BLINK_STEPS, batch_size=8, seed=0, log_every=500, ema_decay=0.999)
        _log(f"training blink module ({BLINK_STEPS} steps)")
        train_blink(
            manifest, cfg, split=None,
            out_path=path, loss_csv_path=CACHE / "blink_losses.csv",
            log=lambda s, *v: _log(f"  blink step {s}: " + " ".join(f"{x:.3f}" for x in v)),
        )
    return BlinkModel.load(path)


def get_gaze_model():
    from eyekit.gaze import GazeModel, train_gaze
    from eyekit.losses import TrainConfig

    path = CACHE / "gaze.ckpt"
    if not path.exists():
        manifest = get_gaze_dataset()
        cfg = TrainConfig.gaze_defaults(steps=GAZE_STEPS, batch_size=8, seed=0, log_every=500)
        _log(f"training gaze module ({GAZE_STEPS} steps)")
        train_gaze(
            manifest, cfg, split=None,
            out_path=path, loss_csv_path=CACHE / "gaze_losses.csv",
            log=lambda s, *v: _log(f"  gaze step {s}: " + " ".join(f"{x:.3f}" for x in v)),
        )
    return GazeModel.load(path)


def extreme_shift_cases(n: int = 60, size: int = 64, seed: int = 991):
    from eyekit import world
    from eyekit.masks import ShiftVector

    rng = np.random.default_rng(seed)
    cases = []
    for i in range(n):
        ranges = world.FactorRanges.for_size(
            size, openness=(1.0, 1.0), gaze_dx=(0.0, 0.0), gaze_dy=(0.0, 0.0)
        )
        p = world.sample_params(int(rng.integers(0, 2**31)), ranges)
        img = world.render(p, seed=int(rng.integers(0, 2**31)))
        eye_mask, iris_mask = world.render_masks(p)
        cases.append((img, eye_mask, iris_mask, ShiftVector(int(EXTREME_SHIFTS[i % len(EXTREME_SHIFTS)]), 0)))
    return cases


def get_ablation_report():
    from eyekit import datasets, world
    from eyekit.gaze import ablation_protocol
    from eyekit.losses import TrainConfig

    out = CACHE / "ablation"
    report_path = out / "ablation.json"
    if not report_path.exists():
        base_dir = CACHE / "data" / "abl_base"
        extra_dir = CACHE / "data" / "abl_extra"
        aug_dir = CACHE / "data" / "abl_aug"
        if not (base_dir / "manifest.json").exists():
            _log("building ablation datasets")
            datasets.build_procedural_pairs(
                ABLATION_TRIPLES, 51, base_dir,
                world.FactorRanges.for_size(64, gaze_dx=(-4.0, 4.0), gaze_dy=(-2.0, 2.0)),
            )
            datasets.build_procedural_pairs(
                ABLATION_TRIPLES, 52, extra_dir,
                world.FactorRanges.for_size(64, gaze_dx=(-12.0, 12.0), gaze_dy=(-6.0, 6.0)),
            )
        base = datasets.DatasetManifest.load(base_dir / "manifest.json")
        if not (aug_dir / "manifest.json").exists():
            extra = datasets.DatasetManifest.load(extra_dir / "manifest.json")
            datasets.merge_manifests([base, extra], aug_dir)
        aug = datasets.DatasetManifest.load(aug_dir / "manifest.json")
        cfg = TrainConfig.gaze_defaults(steps=ABLATION_STEPS, batch_size=8, seed=0, log_every=1000)
        _log(f"running ablation protocol (2 x {ABLATION_STEPS} steps)")
        ablation_protocol(
            base, aug, cfg, extreme_shift_cases(), out_dir=out,
            log=lambda s, *v: _log(f"  ablation step {s}"),
        )
    return json.loads(report_path.read_text())


def get_gan_corpus():
    from eyekit import datasets, world

    out = CACHE / "data" / "gan_corpus"
    if not (out / "manifest.json").exists():
        _log(f"building generator corpus ({GAN_TRIPLES} triples at 32x32)")
        datasets.build_procedural_pairs(
            GAN_TRIPLES, 77, out, world.FactorRanges.for_size(32)
        )
    return datasets.DatasetManifest.load(out / "manifest.json")


def get_style_generator():
    from eyekit.losses import TrainConfig
    from eyekit.stylegen import GeneratorConfig, StyleGenerator, train_generator

    path = CACHE / "stylegen.ckpt"
    if not path.exists():
        manifest = get_gan_corpus()
        images = np.stack([manifest.image(e) for e in manifest.entries])
        # FFHQ-like openness skew: the average style must decode to an
        # open eye for average-style mixing to open closed sources, but
        # closed eyes must keep enough mass to survive as a sample mode.
        weights = np.array([5.0 if e.role == "open" else 1.0 for e in manifest.entries])
        cfg = GeneratorConfig()
        tcfg = TrainConfig(
            steps=GAN_STEPS, batch_size=16, seed=0,
            lr_gen=2e-4, lr_disc=2e-4, log_every=500,
        )
        _log(f"training style generator ({GAN_STEPS} steps)")
        train_generator(
            images, cfg, tcfg, sample_weights=weights,
            manifest_hash=manifest.content_hash(), out_path=path,
            log=lambda s, g, d: _log(f"  gan step {s}: g={g:.3f} d={d:.3f}"),
        )
    return StyleGenerator.load(path)


def closed_probe_styles(gen, oracle, n: int = 24, seed: int = 900, max_tries: int = 20000):
    """Styles of generator samples the oracle reads as closed eyes."""
    rng = np.random.default_rng(seed)
    styles = []
    tries = 0
    while len(styles) < n and tries < max_tries:
        tries += 1
        w = gen.map(gen.sample_z(int(rng.integers(0, 2**31)), 1)[0])
        if oracle(gen.synthesize(w)) <= 0.25:
            styles.append(w)
    if len(styles) < n:
        raise RuntimeError(f"only {len(styles)} closed probes in {tries} draws")
    return styles


def get_mix_bands():
    """Layer bands chosen by attribution sweeps on the trained GAN.

    The blink band is selected the way the original experiment ran:
    mix the average style into closed-eye probes and keep the band with
    the largest openness response.  The gaze band comes from a sweep
    over generic probes, by centroid displacement.
    """
    from eyekit.stylegen import layer_sweep

    path = CACHE / "mix_bands.json"
    if not path.exists():
        gen = get_style_generator()
        oracle = get_oracle()
        _log("running layer sweeps on trained generator")
        w_avg = gen.compute_w_avg(2000, 123)
        probes = closed_probe_styles(gen, oracle)
        report_blink = layer_sweep(gen, w_avg, 2, [], oracle, probe_styles=probes)
        w_ref = gen.map(gen.sample_z(321, 1)[0])
        report_gaze = layer_sweep(gen, w_ref, 1, range(200, 224), oracle)
        (CACHE / "stylegen_sweep_blink.json").write_text(report_blink.to_json() + "\n")
        (CACHE / "stylegen_sweep_gaze.json").write_text(report_gaze.to_json() + "\n")
        path.write_text(
            json.dumps(
                {"blink_band": report_blink.argmax_openness, "gaze_band": report_gaze.argmax_centroid},
                sort_keys=True,
            )
            + "\n"
        )
    return json.loads(path.read_text())


def get_mix_blink_dataset():
    from eyekit import datasets

    out = CACHE / "data" / "blink_mix"
    if not (out / "manifest.json").exists():
        gen = get_style_generator()
        oracle = get_oracle()
        bands = get_mix_bands()
        _log("building style-mix blink dataset (112 closed / 61 uncertain)")
        w_avg = gen.compute_w_avg(2000, 123)
        datasets.build_blink_pairs(
            gen, w_avg, bands["blink_band"], 112, 61, 7, out, oracle
        )
    return datasets.DatasetManifest.load(out / "manifest.json")


def get_mix_gaze_dataset():
    from eyekit import datasets

    out = CACHE / "data" / "gaze_mix"
    if not (out / "manifest.json").exists():
        gen = get_style_generator()
        bands = get_mix_bands()
        _log("building style-mix gaze dataset (500 images)")
        w_ref = gen.map(gen.sample_z(4242, 1)[0])
        datasets.build_gaze_set(gen, w_ref, bands["gaze_band"], 500, 9, out)
    return datasets.DatasetManifest.load(out / "manifest.json")


def build_all() -> None:
    import torch

    torch.set_num_threads(1)
    t0 = time.time()
    get_oracle()
    get_blink_dataset()
    get_gaze_dataset()
    get_style_generator()
    get_mix_bands()
    get_mix_blink_dataset()
    get_mix_gaze_dataset()
    get_blink_model()
    get_gaze_model()
    get_ablation_report()
    (CACHE / "build_complete.json").write_text(
        json.dumps({"elapsed_s": round(time.time() - t0, 1)}) + "\n"
    )
    _log(f"all artifacts built in {(time.time() - t0) / 60:.1f} min")


if __name__ == "__main__":
    build_all()
