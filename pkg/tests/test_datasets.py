import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from eyekit import datasets, pngio, world
from eyekit.datasets import (
    CLOSED_MAX_OPENNESS,
    DatasetManifest,
    build_gaze_set,
    build_procedural_pairs,
    merge_manifests,
    validate_manifest,
)
from eyekit.stylegen import style_mix


def _dir_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.name.encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_procedural_triple_shares_identity(tmp_path):
    manifest = build_procedural_pairs(1, 5, tmp_path, world.FactorRanges.for_size(32))
    assert len(manifest.entries) == 3
    params = [e.provenance["params"] for e in manifest.entries]
    for key in ("gaze_dx", "gaze_dy", "iris_radius", "iris_hue", "skin_tone"):
        assert len({p[key] for p in params}) == 1
    opens = {p["openness"] for p in params}
    assert len(opens) == 3


def test_procedural_popcount_ordering(tmp_path):
    manifest = build_procedural_pairs(4, 6, tmp_path, world.FactorRanges.for_size(32))
    by_id = manifest.by_id()
    for e in manifest.with_role("open"):
        idx = e.id.split("_")[1]
        pops = {}
        for role in ("open", "uncertain", "closed"):
            eye_mask, _ = manifest.masks(by_id[f"{role}_{idx}"])
            pops[role] = int(eye_mask.sum())
        assert pops["open"] > pops["uncertain"] > pops["closed"]


def test_procedural_rebuild_byte_identical(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    build_procedural_pairs(6, 9, a, world.FactorRanges.for_size(32))
    build_procedural_pairs(6, 9, b, world.FactorRanges.for_size(32))
    assert _dir_digest(a) == _dir_digest(b)


def test_procedural_zero_samples(tmp_path):
    manifest = build_procedural_pairs(0, 0, tmp_path)
    assert manifest.entries == []
    assert validate_manifest(tmp_path / "manifest.json") == []


def test_validate_fresh_manifest(tmp_path):
    build_procedural_pairs(3, 1, tmp_path, world.FactorRanges.for_size(32))
    assert validate_manifest(tmp_path / "manifest.json") == []


def test_validate_dangling_pair(tmp_path):
    build_procedural_pairs(2, 1, tmp_path, world.FactorRanges.for_size(32))
    path = tmp_path / "manifest.json"
    doc = json.loads(path.read_text())
    victim = next(e for e in doc["entries"] if e["role"] == "closed")
    victim["pair_id"] = "open_99999"
    path.write_text(json.dumps(doc))
    violations = validate_manifest(path)
    assert len(violations) == 1
    assert "closed_" in violations[0] and "open_99999" in violations[0]


def test_validate_score_out_of_range(tmp_path):
    build_procedural_pairs(1, 2, tmp_path, world.FactorRanges.for_size(32))
    path = tmp_path / "manifest.json"
    doc = json.loads(path.read_text())
    doc["entries"][0]["blink_score_gt"] = 1.5
    path.write_text(json.dumps(doc))
    violations = validate_manifest(path)
    assert any("blink_score_gt" in v for v in violations)


def test_validate_unreadable(tmp_path):
    assert validate_manifest(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert any(v.startswith("unreadable") for v in validate_manifest(bad))


def test_merge_manifests_keeps_pairs(tmp_path):
    a = build_procedural_pairs(2, 3, tmp_path / "a", world.FactorRanges.for_size(32))
    b = build_procedural_pairs(2, 4, tmp_path / "b", world.FactorRanges.for_size(32))
    merged = merge_manifests([a, b], tmp_path / "m")
    assert len(merged.entries) == 12
    assert validate_manifest(tmp_path / "m" / "manifest.json") == []


# --- style-mix builders (need the trained toy generator) ------------------

def test_gaze_set_empty_and_identity(tmp_path, style_generator):
    gen = style_generator
    w_ref = gen.map(gen.sample_z(0, 1)[0])
    empty = build_gaze_set(gen, w_ref, [6], 0, 1, tmp_path / "e")
    assert empty.entries == []
    manifest = build_gaze_set(gen, w_ref, [], 3, 1, tmp_path / "i")
    for e in manifest.entries:
        img = manifest.image(e)
        w = gen.map(gen.sample_z(e.provenance["seed"], 1)[0])
        direct = pngio.decode_image_png(pngio.encode_image_png(gen.synthesize(w)))
        assert np.array_equal(img, direct)


def test_gaze_set_rebuild_identical_hashes(tmp_path, style_generator, mix_gaze_dataset):
    gen = style_generator
    bands = json.loads((Path(__file__).parent.parent / ".cache" / "mix_bands.json").read_text())
    w_ref = gen.map(gen.sample_z(4242, 1)[0])
    rebuilt = build_gaze_set(gen, w_ref, bands["gaze_band"], 20, 9, tmp_path)
    original = {e.id: e.sha256 for e in mix_gaze_dataset.entries}
    for e in rebuilt.entries:
        assert original[e.id] == e.sha256
    assert len(mix_gaze_dataset.entries) == 500


def test_blink_pairs_structure(mix_blink_dataset):
    manifest = mix_blink_dataset
    closed = manifest.with_role("closed")
    uncertain = manifest.with_role("uncertain")
    opens = manifest.with_role("open")
    assert len(closed) == 112 and len(uncertain) == 61
    assert len(closed) + len(uncertain) == 173  # one pair per source
    assert len(opens) == 173
    ids = manifest.by_id()
    for e in closed + uncertain:
        assert e.pair_id in ids and ids[e.pair_id].role == "open"
        assert e.blink_score_gt == (0.0 if e.role == "closed" else 0.5)
    assert validate_manifest(manifest.root / "manifest.json") == []


def test_blink_pairs_closed_filter_rule(mix_blink_dataset, oracle):
    for e in mix_blink_dataset.with_role("closed"):
        assert e.provenance["oracle_openness"] <= CLOSED_MAX_OPENNESS
        # PNG quantization may move the estimate a hair; it must stay close.
        assert abs(oracle(mix_blink_dataset.image(e)) - e.provenance["oracle_openness"]) < 0.03


def test_blink_pairs_open_partner_more_open(mix_blink_dataset, oracle):
    # Reported statistic: open member strictly more open than its closed
    # partner in at least 90% of style-mix pairs.
    manifest = mix_blink_dataset
    ids = manifest.by_id()
    wins = total = 0
    for e in manifest.with_role("closed"):
        partner = ids[e.pair_id]
        total += 1
        if oracle(manifest.image(partner)) > oracle(manifest.image(e)):
            wins += 1
    assert total == 112
    assert wins / total >= 0.9, f"open-beats-closed fraction {wins}/{total}"


def test_blink_pairs_quota_unreachable(tmp_path, style_generator, oracle):
    gen = style_generator
    w_avg = gen.compute_w_avg(64, 0)
    with pytest.raises(datasets.BuildError) as e:
        datasets.build_blink_pairs(
            gen, w_avg, [6, 7], 3, 0, 0, tmp_path, oracle, max_attempts_per_item=1
        )
    assert "acceptance rate" in str(e.value)


def test_manifest_split_assignment(tmp_path):
    manifest = build_procedural_pairs(30, 10, tmp_path, world.FactorRanges.for_size(32))
    splits = {e.split for e in manifest.entries}
    assert splits <= {"train", "val", "test"}
    frac_train = sum(e.split == "train" for e in manifest.entries) / len(manifest.entries)
    assert 0.5 < frac_train < 0.95
