"""Versioned binary checkpoint container.

Layout: magic, u32 container version, u64 header length, UTF-8 JSON
header (kind, config snapshot, training seed, manifest hash, step count,
tensor directory), then raw little-endian tensor blobs.  Serialization
is canonical, so identical states produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"EYCK"
CONTAINER_VERSION = 1

_DTYPES = {
    "float32": np.float32,
    "float64": np.float64,
    "int64": np.int64,
}


def save_checkpoint(
    path,
    kind: str,
    config: dict,
    tensors: dict[str, torch.Tensor],
    *,
    train_seed: int = 0,
    manifest_hash: str = "",
    step: int = 0,
    extra: dict | None = None,
) -> None:
    directory = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = tensors[name].detach().cpu().numpy()
        if arr.dtype.name not in _DTYPES:
            arr = arr.astype(np.float32)
        data = np.ascontiguousarray(arr).tobytes()
        directory.append(
            {
                "name": name,
                "dtype": arr.dtype.name,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(data),
            }
        )
        blobs.append(data)
        offset += len(data)
    header = {
        "container_version": CONTAINER_VERSION,
        "kind": kind,
        "config": config,
        "train_seed": train_seed,
        "manifest_hash": manifest_hash,
        "step": step,
        "extra": extra or {},
        "tensors": directory,
    }
    hdr = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", CONTAINER_VERSION))
        f.write(struct.pack("<Q", len(hdr)))
        f.write(hdr)
        for b in blobs:
            f.write(b)


def load_checkpoint(path) -> tuple[dict, dict[str, torch.Tensor]]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"not a checkpoint container: {path}")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != CONTAINER_VERSION:
        raise ValueError(f"unsupported container version {version}")
    (hdr_len,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + hdr_len].decode("utf-8"))
    base = 16 + hdr_len
    tensors = {}
    for ent in header["tensors"]:
        start = base + ent["offset"]
        buf = raw[start : start + ent["nbytes"]]
        arr = np.frombuffer(buf, dtype=_DTYPES[ent["dtype"]]).reshape(ent["shape"]).copy()
        tensors[ent["name"]] = torch.from_numpy(arr)
    return header, tensors


def state_dict_tensors(prefix: str, module: torch.nn.Module) -> dict[str, torch.Tensor]:
    return {f"{prefix}.{k}": v for k, v in module.state_dict().items()}


def load_state_dict(prefix: str, module: torch.nn.Module, tensors: dict) -> None:
    state = {
        k[len(prefix) + 1 :]: v for k, v in tensors.items() if k.startswith(prefix + ".")
    }
    module.load_state_dict(state)


def sha256_of(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
