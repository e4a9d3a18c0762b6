"""Command-line entry points for the toolkit.

Every subcommand takes its randomness from ``--seed`` and writes its
artifacts under ``--out``.  Failures print one machine-readable JSON
line to stderr and exit nonzero; usage errors exit 2.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_world_render(args) -> int:
    from . import pngio, world

    out = _out_dir(args)
    ranges = world.FactorRanges.for_size(args.size)
    params = world.sample_params(args.seed, ranges)
    overrides = {}
    if args.openness is not None:
        overrides["openness"] = args.openness
    if args.gaze_dx is not None:
        overrides["gaze_dx"] = args.gaze_dx
    if args.gaze_dy is not None:
        overrides["gaze_dy"] = args.gaze_dy
    params = world.EyeParams(**{**params.to_dict(), **overrides})
    params.validate()
    img = world.render(params, seed=args.seed)
    eye_mask, iris_mask = world.render_masks(params)
    pngio.save_image(img, out / "eye.png")
    pngio.save_mask(eye_mask, out / "eye_mask.png")
    pngio.save_mask(iris_mask, out / "iris_mask.png")
    pngio.save_params(params, out / "params.json")
    print(json.dumps({"image": str(out / "eye.png")}))
    return 0


def cmd_dataset(args) -> int:
    from . import datasets, world

    out = _out_dir(args)
    if args.kind == "procedural":
        ranges = world.FactorRanges.for_size(args.size)
        if args.gaze_max is not None:
            ranges = world.FactorRanges.for_size(
                args.size,
                gaze_dx=(-args.gaze_max, args.gaze_max),
                gaze_dy=(-args.gaze_max / 2, args.gaze_max / 2),
            )
        manifest = datasets.build_procedural_pairs(args.n, args.seed, out, ranges)
    else:
        from .stylegen import StyleGenerator
        from .world import OpennessOracle

        gen = StyleGenerator.load(args.generator)
        layer_set = [int(x) for x in args.layer_set.split(",")]
        if args.kind == "blink":
            oracle = OpennessOracle.load(args.oracle)
            w_avg = gen.compute_w_avg(args.w_avg_n, args.seed)
            manifest = datasets.build_blink_pairs(
                gen, w_avg, layer_set, args.n_closed, args.n_uncertain, args.seed, out, oracle
            )
        else:
            w_ref = gen.map(gen.sample_z(args.ref_seed, 1)[0])
            manifest = datasets.build_gaze_set(gen, w_ref, layer_set, args.n, args.seed, out)
    print(json.dumps({"manifest": str(out / "manifest.json"), "entries": len(manifest.entries)}))
    return 0


def cmd_sweep(args) -> int:
    from . import stylegen, world

    out = _out_dir(args)
    oracle = world.OpennessOracle.load(args.oracle)
    if args.fixture:
        wiring = {}
        for part in args.fixture.split(","):
            factor, row = part.split(":")
            wiring[factor] = int(row)
        gen = stylegen.FactorWiredGenerator(wiring, img_size=args.size)
        w_ref = gen.sample_style(args.seed + 1)
    else:
        gen = stylegen.StyleGenerator.load(args.generator)
        w_ref = gen.map(gen.sample_z(args.seed + 1, 1)[0])
    report = stylegen.layer_sweep(
        gen, w_ref, args.band_size, range(args.seed, args.seed + args.probes), oracle
    )
    (out / "sweep.json").write_text(report.to_json() + "\n")
    (out / "sweep.csv").write_text(report.to_csv())
    print(json.dumps({"argmax_openness": report.argmax_openness, "argmax_color": report.argmax_color}))
    return 0


def _train_cfg(args, gaze: bool = False):
    from .losses import TrainConfig

    cfg = TrainConfig.gaze_defaults() if gaze else TrainConfig()
    cfg.steps = args.steps
    cfg.batch_size = args.batch_size
    cfg.seed = args.seed
    return cfg


def cmd_train(args) -> int:
    from .datasets import DatasetManifest

    out = _out_dir(args)
    log = None
    if args.verbose:
        log = lambda step, *vals: print(f"step {step}: " + " ".join(f"{v:.4f}" for v in vals), flush=True)
    if args.kind == "blink":
        from .blink import train_blink

        manifest = DatasetManifest.load(args.manifest)
        train_blink(
            manifest, _train_cfg(args),
            out_path=out / "blink.ckpt", loss_csv_path=out / "blink_losses.csv", log=log,
        )
        print(json.dumps({"checkpoint": str(out / "blink.ckpt")}))
    elif args.kind == "gaze":
        from .gaze import train_gaze

        manifest = DatasetManifest.load(args.manifest)
        extra = DatasetManifest.load(args.extra_manifest) if args.extra_manifest else None
        train_gaze(
            manifest, _train_cfg(args, gaze=True), extra_manifest=extra,
            out_path=out / "gaze.ckpt", loss_csv_path=out / "gaze_losses.csv", log=log,
        )
        print(json.dumps({"checkpoint": str(out / "gaze.ckpt")}))
    else:
        from .datasets import DatasetManifest as DM
        from .stylegen import GeneratorConfig, train_generator

        manifest = DM.load(args.manifest)
        images = np.stack([manifest.image(e) for e in manifest.entries])
        weights = np.array([3.0 if e.role == "open" else 1.0 for e in manifest.entries])
        size = images.shape[1]
        layers = args.layers
        base = size // 2 ** (layers // 2 - 1)
        cfg = GeneratorConfig(layers=layers, base_resolution=base, out_resolution=size)
        tcfg = _train_cfg(args)
        tcfg.lr_gen = args.lr_gen
        tcfg.lr_disc = args.lr_disc
        train_generator(
            images, cfg, tcfg, sample_weights=weights,
            manifest_hash=manifest.content_hash(), out_path=out / "generator.ckpt", log=log,
        )
        print(json.dumps({"checkpoint": str(out / "generator.ckpt")}))
    return 0


def cmd_infer(args) -> int:
    from . import pngio

    out = _out_dir(args)
    img = pngio.load_image(args.image)
    if args.kind == "blink":
        from .blink import BlinkModel, generate

        model = BlinkModel.load(_require_checkpoint("blink", args.checkpoint))
        result = generate(img, args.score, model)
        target = out / "blink_out.png"
    else:
        from . import world
        from .gaze import GazeModel, redirect
        from .masks import ShiftVector

        model = GazeModel.load(_require_checkpoint("gaze", args.checkpoint))
        oracle = world.OpennessOracle.load(_require_checkpoint("oracle", args.oracle))
        params = world.estimate_params_from_image(img, oracle)
        eye_mask, iris_mask = world.render_masks(params)
        donor = None
        if args.style:
            donor_img = pngio.load_image(args.style)
            donor_params = world.estimate_params_from_image(donor_img, oracle)
            _, donor_iris = world.render_masks(donor_params)
            donor = (donor_img, donor_iris)
        result = redirect(
            img, eye_mask, iris_mask, ShiftVector(args.dx, args.dy), model,
            rng_seed=args.seed, style_donor=donor,
        )
        target = out / "gaze_out.png"
    pngio.save_image(result, target)
    print(json.dumps({"image": str(target)}))
    return 0


def cmd_detect(args) -> int:
    from . import pngio
    from .blink import BlinkModel, detect_blink

    out = _out_dir(args)
    model = BlinkModel.load(_require_checkpoint("blink", args.checkpoint))
    frame_paths = sorted(Path(args.frames).glob("*.png"))
    frames = [pngio.load_image(p) for p in frame_paths]
    scores = detect_blink(frames, model)
    payload = [{"frame": p.name, "s_o": s} for p, s in zip(frame_paths, scores)]
    (out / "scores.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(json.dumps({"frames": len(scores), "scores": str(out / "scores.json")}))
    return 0


def cmd_ablate(args) -> int:
    from . import world
    from .datasets import DatasetManifest
    from .gaze import ablation_protocol
    from .masks import ShiftVector

    out = _out_dir(args)
    base = DatasetManifest.load(args.base_manifest)
    aug = DatasetManifest.load(args.augmented_manifest)
    size = base.image(base.entries[0]).shape[0]
    rng = np.random.default_rng(args.seed + 991)
    cases = []
    shifts = [-12, -10, -8, 8, 10, 12]
    for i in range(args.eval_n):
        ranges = world.FactorRanges.for_size(size, openness=(1.0, 1.0), gaze_dx=(0.0, 0.0), gaze_dy=(0.0, 0.0))
        p = world.sample_params(int(rng.integers(0, 2**31)), ranges)
        img = world.render(p, seed=int(rng.integers(0, 2**31)))
        eye_mask, iris_mask = world.render_masks(p)
        v = ShiftVector(int(shifts[i % len(shifts)]), 0)
        cases.append((img, eye_mask, iris_mask, v))
    cfg = _train_cfg(args, gaze=True)
    report = ablation_protocol(base, aug, cfg, cases, out_dir=out)
    print(json.dumps({"report": str(out / "ablation.json"), "rows": report["rows"]}))
    return 0


CHECKPOINT_DIR_ENV = "EYEKIT_CHECKPOINT_DIR"

_DEFAULT_NAMES = {
    "blink": "blink.ckpt",
    "gaze": "gaze.ckpt",
    "generator": "generator.ckpt",
    "oracle": "oracle.joblib",
}


def _default_checkpoint(kind: str, explicit):
    """Resolve a checkpoint path, falling back to $EYEKIT_CHECKPOINT_DIR."""
    import os

    if explicit:
        return explicit
    root = os.environ.get(CHECKPOINT_DIR_ENV)
    if root:
        candidate = Path(root) / _DEFAULT_NAMES[kind]
        if candidate.exists():
            return str(candidate)
    return None


def _require_checkpoint(kind: str, explicit) -> str:
    path = _default_checkpoint(kind, explicit)
    if path is None:
        raise FileNotFoundError(
            f"no {kind} checkpoint: pass the flag or set ${CHECKPOINT_DIR_ENV}"
        )
    return path


def cmd_serve(args) -> int:
    from .service import ServiceConfig, run

    cfg = ServiceConfig(
        host=args.host,
        port=args.port,
        blink_checkpoint=_default_checkpoint("blink", args.blink),
        gaze_checkpoint=_default_checkpoint("gaze", args.gaze),
        generator_checkpoint=_default_checkpoint("generator", args.generator),
        oracle_path=_default_checkpoint("oracle", args.oracle),
    )
    run(cfg)
    return 0


def cmd_validate_manifest(args) -> int:
    from .datasets import validate_manifest

    violations = validate_manifest(args.manifest)
    print(json.dumps({"violations": violations}))
    return 0 if not violations else 1


def cmd_fit_oracle(args) -> int:
    from .world import OpennessOracle

    out = _out_dir(args)
    oracle = OpennessOracle().fit(seed=args.seed, n=args.n)
    oracle.save(out / "oracle.joblib")
    print(json.dumps({"oracle": str(out / "oracle.joblib"), "mae": oracle.mae_}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eyekit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="out")

    p_world = sub.add_parser("world", help="procedural world utilities")
    world_sub = p_world.add_subparsers(dest="world_command", required=True)
    p_render = world_sub.add_parser("render")
    common(p_render)
    p_render.add_argument("--size", type=int, default=64)
    p_render.add_argument("--openness", type=float, default=None)
    p_render.add_argument("--gaze-dx", type=float, default=None)
    p_render.add_argument("--gaze-dy", type=float, default=None)
    p_render.set_defaults(func=cmd_world_render)

    p_dataset = sub.add_parser("dataset", help="build training datasets")
    ds_sub = p_dataset.add_subparsers(dest="kind_command", required=True)
    p_blink_ds = ds_sub.add_parser("blink")
    common(p_blink_ds)
    p_blink_ds.add_argument("--generator", required=True)
    p_blink_ds.add_argument("--oracle", required=True)
    p_blink_ds.add_argument("--layer-set", dest="layer_set", required=True)
    p_blink_ds.add_argument("--n-closed", type=int, default=112)
    p_blink_ds.add_argument("--n-uncertain", type=int, default=61)
    p_blink_ds.add_argument("--w-avg-n", type=int, default=10000)
    p_blink_ds.set_defaults(func=cmd_dataset, kind="blink")
    p_gaze_ds = ds_sub.add_parser("gaze")
    common(p_gaze_ds)
    p_gaze_ds.add_argument("--generator", required=True)
    p_gaze_ds.add_argument("--layer-set", dest="layer_set", required=True)
    p_gaze_ds.add_argument("--n", type=int, default=500)
    p_gaze_ds.add_argument("--ref-seed", type=int, default=1)
    p_gaze_ds.set_defaults(func=cmd_dataset, kind="gaze")
    p_proc_ds = ds_sub.add_parser("procedural")
    common(p_proc_ds)
    p_proc_ds.add_argument("--n", type=int, default=250)
    p_proc_ds.add_argument("--size", type=int, default=64)
    p_proc_ds.add_argument("--gaze-max", type=float, default=None)
    p_proc_ds.set_defaults(func=cmd_dataset, kind="procedural")

    p_sweep = sub.add_parser("sweep", help="layer-attribution sweep")
    common(p_sweep)
    p_sweep.add_argument("--band-size", type=int, default=1)
    p_sweep.add_argument("--probes", type=int, default=16)
    p_sweep.add_argument("--oracle", required=True)
    p_sweep.add_argument("--fixture", default=None, help="factor:row pairs, e.g. openness:3,iris_hue:5")
    p_sweep.add_argument("--generator", default=None)
    p_sweep.add_argument("--size", type=int, default=64)
    p_sweep.set_defaults(func=cmd_sweep)

    p_train = sub.add_parser("train", help="train a module")
    train_sub = p_train.add_subparsers(dest="kind_command", required=True)
    for kind in ("blink", "gaze", "generator"):
        p = train_sub.add_parser(kind)
        common(p)
        p.add_argument("--manifest", required=True)
        p.add_argument("--steps", type=int, default=15000)
        p.add_argument("--batch-size", type=int, default=8)
        p.add_argument("--verbose", action="store_true")
        if kind == "gaze":
            p.add_argument("--extra-manifest", default=None)
        if kind == "generator":
            p.add_argument("--layers", type=int, default=8)
            p.add_argument("--lr-gen", type=float, default=2e-4)
            p.add_argument("--lr-disc", type=float, default=2e-4)
        p.set_defaults(func=cmd_train, kind=kind)

    p_infer = sub.add_parser("infer", help="single-image inference")
    infer_sub = p_infer.add_subparsers(dest="kind_command", required=True)
    p_ib = infer_sub.add_parser("blink")
    common(p_ib)
    p_ib.add_argument("--image", required=True)
    p_ib.add_argument("--score", type=float, required=True)
    p_ib.add_argument("--checkpoint", default=None)
    p_ib.set_defaults(func=cmd_infer, kind="blink")
    p_ig = infer_sub.add_parser("gaze")
    common(p_ig)
    p_ig.add_argument("--image", required=True)
    p_ig.add_argument("--dx", type=int, required=True)
    p_ig.add_argument("--dy", type=int, required=True)
    p_ig.add_argument("--checkpoint", default=None)
    p_ig.add_argument("--oracle", default=None)
    p_ig.add_argument("--style", default=None)
    p_ig.set_defaults(func=cmd_infer, kind="gaze")

    p_detect = sub.add_parser("detect", help="blink scores for a frame directory")
    common(p_detect)
    p_detect.add_argument("--frames", required=True)
    p_detect.add_argument("--checkpoint", default=None)
    p_detect.set_defaults(func=cmd_detect)

    p_ablate = sub.add_parser("ablate", help="augmentation ablation study")
    common(p_ablate)
    p_ablate.add_argument("--base-manifest", required=True)
    p_ablate.add_argument("--augmented-manifest", required=True)
    p_ablate.add_argument("--steps", type=int, default=6000)
    p_ablate.add_argument("--batch-size", type=int, default=8)
    p_ablate.add_argument("--eval-n", type=int, default=60)
    p_ablate.set_defaults(func=cmd_ablate)

    p_serve = sub.add_parser("serve", help="run the inference service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8787)
    p_serve.add_argument("--blink", default=None)
    p_serve.add_argument("--gaze", default=None)
    p_serve.add_argument("--generator", default=None)
    p_serve.add_argument("--oracle", default=None)
    p_serve.set_defaults(func=cmd_serve)

    p_validate = sub.add_parser("validate-manifest", help="check manifest invariants")
    p_validate.add_argument("manifest")
    p_validate.set_defaults(func=cmd_validate_manifest)

    p_oracle = sub.add_parser("fit-oracle", help="fit and save the openness oracle")
    common(p_oracle)
    p_oracle.add_argument("--n", type=int, default=1800)
    p_oracle.set_defaults(func=cmd_fit_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:  # noqa: BLE001 - single reporting point for the CLI
        print(json.dumps({"error": str(e), "type": type(e).__name__}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
