"""Dataset builders and the manifest format they all emit.

Three build paths share one manifest schema: style-mixed blink pairs
(closed/uncertain sources opened with the average style), style-mixed
unpaired gaze images, and direct procedural triples with ground-truth
masks.  Builders are deterministic per seed, record SHA-256 of every
image, and can be re-validated from disk.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import pngio, world
from .stylegen import StyleGenerator, check_style, style_mix
from .world import FactorRanges, OpennessOracle, ValidationError

FORMAT_VERSION = 1
ROLES = ("open", "closed", "uncertain", "gaze")

CLOSED_MAX_OPENNESS = 0.2
UNCERTAIN_RANGE = (0.3, 0.7)
OPEN_MIN_OPENNESS = 0.8


class BuildError(RuntimeError):
    pass


@dataclass
class ManifestEntry:
    id: str
    role: str
    image_path: str
    split: str
    mask_paths: Optional[dict] = None
    blink_score_gt: Optional[float] = None
    pair_id: Optional[str] = None
    provenance: dict = field(default_factory=dict)
    sha256: str = ""
    filtered_reason: Optional[str] = None


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    format_version: int = FORMAT_VERSION
    meta: dict = field(default_factory=dict)
    root: Optional[Path] = None

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "meta": self.meta,
            "entries": [asdict(e) for e in self.entries],
        }

    def save(self, path) -> None:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        d = json.loads(path.read_text())
        entries = [ManifestEntry(**e) for e in d["entries"]]
        return cls(
            entries=entries,
            format_version=d["format_version"],
            meta=d.get("meta", {}),
            root=path.parent,
        )

    def by_id(self) -> dict[str, ManifestEntry]:
        return {e.id: e for e in self.entries}

    def with_role(self, role: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.role == role]

    def image(self, entry: ManifestEntry) -> np.ndarray:
        return pngio.load_image(self.root / entry.image_path)

    def masks(self, entry: ManifestEntry) -> tuple[np.ndarray, np.ndarray]:
        if not entry.mask_paths:
            raise ValidationError("mask_paths", f"entry {entry.id} has no masks")
        return (
            pngio.load_mask(self.root / entry.mask_paths["eye"]),
            pngio.load_mask(self.root / entry.mask_paths["iris"]),
        )

    def content_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()


def _split_for(entry_id: str) -> str:
    h = int(hashlib.md5(entry_id.encode()).hexdigest(), 16) % 10
    if h < 8:
        return "train"
    return "val" if h == 8 else "test"


def _write_image(root: Path, name: str, img: np.ndarray) -> tuple[str, str]:
    data = pngio.encode_image_png(img)
    (root / name).write_bytes(data)
    return name, pngio.sha256_bytes(data)


def build_blink_pairs(
    gen: StyleGenerator,
    w_avg: np.ndarray,
    layer_set,
    n_closed: int,
    n_uncertain: int,
    rng_seed: int,
    out_dir,
    oracle: OpennessOracle,
    max_attempts_per_item: int = 200,
) -> DatasetManifest:
    """Style-mixing blink dataset: sample latents, keep closed/uncertain
    eyes by oracle thresholds, pair each with its average-style-mixed
    open version."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    w_avg = check_style(w_avg, gen.layers)
    layer_set = sorted(int(i) for i in layer_set)
    rng = np.random.default_rng(rng_seed)
    entries: list[ManifestEntry] = []
    quotas = {"closed": n_closed, "uncertain": n_uncertain}
    counts = {"closed": 0, "uncertain": 0}
    attempts = 0
    max_attempts = max(1, (n_closed + n_uncertain)) * max_attempts_per_item
    pair_index = 0

    while counts["closed"] < n_closed or counts["uncertain"] < n_uncertain:
        if attempts >= max_attempts:
            rate = (counts["closed"] + counts["uncertain"]) / max(1, attempts)
            raise BuildError(
                f"quota unreachable after {attempts} draws "
                f"(acceptance rate {rate:.4f}, kept {counts})"
            )
        attempts += 1
        z_seed = int(rng.integers(0, 2**31))
        z = gen.sample_z(z_seed, 1)[0]
        w = gen.map(z)
        img = gen.synthesize(w)
        o = oracle(img)
        if o <= CLOSED_MAX_OPENNESS and counts["closed"] < n_closed:
            role, score = "closed", 0.0
        elif UNCERTAIN_RANGE[0] <= o <= UNCERTAIN_RANGE[1] and counts["uncertain"] < n_uncertain:
            role, score = "uncertain", 0.5
        else:
            continue
        counts[role] += 1
        open_img = gen.synthesize(style_mix(w, w_avg, layer_set))
        src_id = f"{role}_{pair_index:05d}"
        open_id = f"open_{pair_index:05d}"
        pair_index += 1
        provenance = {
            "method": "style_mix",
            "seed": z_seed,
            "layer_set": layer_set,
            "oracle_openness": round(o, 6),
        }
        name, sha = _write_image(out_dir, f"{src_id}.png", img)
        entries.append(
            ManifestEntry(
                id=src_id, role=role, image_path=name, split=_split_for(src_id),
                blink_score_gt=score, pair_id=open_id, provenance=provenance, sha256=sha,
            )
        )
        name, sha = _write_image(out_dir, f"{open_id}.png", open_img)
        entries.append(
            ManifestEntry(
                id=open_id, role="open", image_path=name, split=_split_for(src_id),
                blink_score_gt=1.0, provenance=provenance, sha256=sha,
            )
        )

    open_scores = [
        oracle(pngio.load_image(out_dir / e.image_path))
        for e in entries
        if e.role == "open"
    ]
    manifest = DatasetManifest(
        entries=entries,
        meta={
            "method": "style_mix_blink",
            "seed": rng_seed,
            "layer_set": layer_set,
            "w_avg_sha256": hashlib.sha256(np.ascontiguousarray(w_avg).tobytes()).hexdigest(),
            "acceptance_rate": (counts["closed"] + counts["uncertain"]) / max(1, attempts),
            "opened_fraction": float(np.mean([s >= OPEN_MIN_OPENNESS for s in open_scores]))
            if open_scores
            else None,
            "quotas": quotas,
        },
        root=out_dir,
    )
    manifest.save(out_dir / "manifest.json")
    return manifest


def build_gaze_set(
    gen: StyleGenerator,
    w_ref: np.ndarray,
    layer_set,
    n: int,
    rng_seed: int,
    out_dir,
) -> DatasetManifest:
    """Unpaired gaze-shifted images: every sample mixed with one reference
    style on the chosen band."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    w_ref = check_style(w_ref, gen.layers)
    layer_set = sorted(int(i) for i in layer_set)
    rng = np.random.default_rng(rng_seed)
    entries = []
    for i in range(n):
        z_seed = int(rng.integers(0, 2**31))
        w = gen.map(gen.sample_z(z_seed, 1)[0])
        img = gen.synthesize(style_mix(w, w_ref, layer_set))
        eid = f"gaze_{i:05d}"
        name, sha = _write_image(out_dir, f"{eid}.png", img)
        entries.append(
            ManifestEntry(
                id=eid, role="gaze", image_path=name, split=_split_for(eid),
                provenance={"method": "style_mix", "seed": z_seed, "layer_set": layer_set},
                sha256=sha,
            )
        )
    manifest = DatasetManifest(
        entries=entries,
        meta={
            "method": "style_mix_gaze",
            "seed": rng_seed,
            "layer_set": layer_set,
            "w_ref_sha256": hashlib.sha256(np.ascontiguousarray(w_ref).tobytes()).hexdigest(),
        },
        root=out_dir,
    )
    manifest.save(out_dir / "manifest.json")
    return manifest


def build_procedural_pairs(
    n: int,
    rng_seed: int,
    out_dir,
    ranges: FactorRanges | None = None,
    closed_max: float = 0.05,
) -> DatasetManifest:
    """Guaranteed-quality triples from the procedural world.

    Each sample shares every identity factor across an open (1.0), an
    uncertain (uniform [0.3, 0.7]) and a closed (<= 0.05) rendering, with
    analytic masks stored alongside.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ranges = ranges or FactorRanges()
    rng = np.random.default_rng(rng_seed)
    entries = []
    for i in range(n):
        p_seed = int(rng.integers(0, 2**31))
        base = world.sample_params(p_seed, ranges)
        mid_openness = float(rng.uniform(*UNCERTAIN_RANGE))
        closed_openness = float(rng.uniform(0.0, closed_max))
        render_seed = int(rng.integers(0, 2**31))
        open_id = f"open_{i:05d}"
        split = _split_for(open_id)
        triple = [
            ("open", open_id, 1.0, 1.0, None),
            ("uncertain", f"uncertain_{i:05d}", mid_openness, 0.5, open_id),
            ("closed", f"closed_{i:05d}", closed_openness, 0.0, open_id),
        ]
        for role, eid, openness, score, pair in triple:
            params = world.EyeParams(**{**base.to_dict(), "openness": openness})
            img = world.render(params, seed=render_seed)
            eye_mask, iris_mask = world.render_masks(params)
            name, sha = _write_image(out_dir, f"{eid}.png", img)
            pngio.save_mask(eye_mask, out_dir / f"{eid}_eye.png")
            pngio.save_mask(iris_mask, out_dir / f"{eid}_iris.png")
            entries.append(
                ManifestEntry(
                    id=eid, role=role, image_path=name, split=split,
                    mask_paths={"eye": f"{eid}_eye.png", "iris": f"{eid}_iris.png"},
                    blink_score_gt=score, pair_id=pair,
                    provenance={"method": "procedural", "seed": p_seed, "params": params.to_dict()},
                    sha256=sha,
                )
            )
    manifest = DatasetManifest(
        entries=entries,
        meta={"method": "procedural", "seed": rng_seed, "img_size": ranges.img_size},
        root=out_dir,
    )
    manifest.save(out_dir / "manifest.json")
    return manifest


def merge_manifests(parts: list[DatasetManifest], out_dir) -> DatasetManifest:
    """Union of datasets copied into one directory; ids get a part prefix."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for pi, manifest in enumerate(parts):
        remap = {e.id: f"p{pi}_{e.id}" for e in manifest.entries}
        for e in manifest.entries:
            new_paths = {}
            files = {"image": e.image_path}
            files.update(e.mask_paths or {})
            for kind, rel in files.items():
                new_rel = f"p{pi}_{rel}"
                (out_dir / new_rel).write_bytes((manifest.root / rel).read_bytes())
                new_paths[kind] = new_rel
            entries.append(
                ManifestEntry(
                    id=remap[e.id],
                    role=e.role,
                    image_path=new_paths.pop("image"),
                    split=e.split,
                    mask_paths=new_paths or None,
                    blink_score_gt=e.blink_score_gt,
                    pair_id=remap.get(e.pair_id) if e.pair_id else None,
                    provenance=e.provenance,
                    sha256=e.sha256,
                )
            )
    merged = DatasetManifest(
        entries=entries,
        meta={"method": "merge", "parts": [m.meta for m in parts]},
        root=out_dir,
    )
    merged.save(out_dir / "manifest.json")
    return merged


def validate_manifest(path) -> list[str]:
    """Machine-readable invariant violations; empty list means valid."""
    path = Path(path)
    if not path.exists():
        return [f"unreadable: {path} does not exist"]
    try:
        manifest = DatasetManifest.load(path)
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        return [f"unreadable: {e}"]

    violations = []
    if manifest.format_version != FORMAT_VERSION:
        violations.append(f"format_version: expected {FORMAT_VERSION}, got {manifest.format_version}")
    ids = manifest.by_id()
    if len(ids) != len(manifest.entries):
        violations.append("ids: duplicate entry ids")
    for e in manifest.entries:
        if e.role not in ROLES:
            violations.append(f"role: entry {e.id} has unknown role {e.role!r}")
        if e.blink_score_gt is not None and not 0.0 <= e.blink_score_gt <= 1.0:
            violations.append(f"blink_score_gt: entry {e.id} out of range ({e.blink_score_gt})")
        if e.role in ("closed", "uncertain"):
            if e.pair_id is None:
                violations.append(f"pair_id: entry {e.id} has no open partner")
            elif e.pair_id not in ids:
                violations.append(f"pair_id: entry {e.id} dangles ({e.pair_id})")
            elif ids[e.pair_id].role != "open":
                violations.append(f"pair_id: entry {e.id} points to non-open {e.pair_id}")
        if e.role == "gaze" and e.pair_id is not None:
            violations.append(f"pair_id: gaze entry {e.id} must be unpaired")
        if e.split not in ("train", "val", "test"):
            violations.append(f"split: entry {e.id} has unknown split {e.split!r}")
        img_path = manifest.root / e.image_path
        if not img_path.exists():
            violations.append(f"image_path: entry {e.id} missing file {e.image_path}")
        if e.mask_paths:
            for kind, rel in e.mask_paths.items():
                if not (manifest.root / rel).exists():
                    violations.append(f"mask_paths: entry {e.id} missing {kind} mask {rel}")
    return violations
