import json
import subprocess
import sys

import numpy as np
import pytest

import artifacts
from eyekit import pngio, world
from eyekit.cli import main


def test_world_render(tmp_path, capsys):
    rc = main(["world", "render", "--seed", "3", "--out", str(tmp_path), "--size", "32"])
    assert rc == 0
    assert (tmp_path / "eye.png").exists()
    assert (tmp_path / "eye_mask.png").exists()
    assert (tmp_path / "params.json").exists()
    out = json.loads(capsys.readouterr().out)
    assert out["image"].endswith("eye.png")


def test_dataset_procedural_and_validate(tmp_path, capsys):
    rc = main(["dataset", "procedural", "--n", "2", "--seed", "1", "--out", str(tmp_path), "--size", "32"])
    assert rc == 0
    capsys.readouterr()
    rc = main(["validate-manifest", str(tmp_path / "manifest.json")])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["violations"] == []


def test_validate_manifest_failure_exit_code(tmp_path, capsys):
    bad = tmp_path / "manifest.json"
    bad.write_text(json.dumps({"format_version": 1, "entries": [
        {"id": "a", "role": "closed", "image_path": "missing.png", "split": "train"}
    ]}))
    rc = main(["validate-manifest", str(bad)])
    assert rc == 1
    assert json.loads(capsys.readouterr().out)["violations"]


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2


def test_error_line_is_machine_readable(tmp_path, capsys):
    rc = main(["train", "blink", "--manifest", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert rc == 1
    err = capsys.readouterr().err.strip().splitlines()[-1]
    payload = json.loads(err)
    assert "error" in payload and "type" in payload


def test_sweep_fixture_cli(tmp_path, capsys):
    rc = main([
        "sweep", "--band-size", "1", "--probes", "4", "--seed", "0",
        "--oracle", str(artifacts.CACHE / "oracle.joblib"),
        "--fixture", "openness:3,iris_hue:5", "--out", str(tmp_path),
    ])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["argmax_openness"] == [3]
    assert out["argmax_color"] == [5]
    assert (tmp_path / "sweep.csv").exists()


def test_infer_blink_cli(tmp_path, capsys, blink_model):
    img = world.render(world.EyeParams(img_size=64), seed=4)
    src = tmp_path / "eye.png"
    pngio.save_image(img, src)
    rc = main([
        "infer", "blink", "--image", str(src), "--score", "1.0",
        "--checkpoint", str(artifacts.CACHE / "blink.ckpt"), "--out", str(tmp_path),
    ])
    assert rc == 0
    out_img = pngio.load_image(tmp_path / "blink_out.png")
    assert out_img.shape == img.shape


def test_infer_gaze_cli(tmp_path, capsys, gaze_model):
    img = world.render(world.EyeParams(img_size=64), seed=5)
    src = tmp_path / "eye.png"
    pngio.save_image(img, src)
    rc = main([
        "infer", "gaze", "--image", str(src), "--dx", "3", "--dy", "0",
        "--checkpoint", str(artifacts.CACHE / "gaze.ckpt"),
        "--oracle", str(artifacts.CACHE / "oracle.joblib"), "--out", str(tmp_path),
    ])
    assert rc == 0
    assert (tmp_path / "gaze_out.png").exists()


def test_detect_cli(tmp_path, capsys, blink_model):
    frames = tmp_path / "frames"
    frames.mkdir()
    for i, o in enumerate((1.0, 0.5, 0.0)):
        pngio.save_image(world.render(world.EyeParams(openness=o, img_size=64), seed=i), frames / f"f{i}.png")
    rc = main([
        "detect", "--frames", str(frames),
        "--checkpoint", str(artifacts.CACHE / "blink.ckpt"), "--out", str(tmp_path),
    ])
    assert rc == 0
    scores = json.loads((tmp_path / "scores.json").read_text())
    assert [s["frame"] for s in scores] == ["f0.png", "f1.png", "f2.png"]


def test_checkpoint_dir_env_fallback(tmp_path, capsys, monkeypatch, blink_model):
    img = world.render(world.EyeParams(img_size=64), seed=6)
    src = tmp_path / "eye.png"
    pngio.save_image(img, src)
    monkeypatch.setenv("EYEKIT_CHECKPOINT_DIR", str(artifacts.CACHE))
    rc = main(["infer", "blink", "--image", str(src), "--score", "0.5", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "blink_out.png").exists()
    monkeypatch.delenv("EYEKIT_CHECKPOINT_DIR")
    rc = main(["infer", "blink", "--image", str(src), "--score", "0.5", "--out", str(tmp_path)])
    assert rc == 1


def test_console_script_help():
    proc = subprocess.run(
        [sys.executable, "-m", "eyekit.cli", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "eyekit" in proc.stdout
