"""Checkpoint files.

Layout: the 8-byte magic ``PGRFCKPT``, a little-endian uint64 manifest length,
the UTF-8 JSON manifest, then every parameter as little-endian float64 in
manifest order (row-major).
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .model import ModelConfig, PoseGrafModel
from .skeleton import validate_topology

MAGIC = b"PGRFCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def checkpoint_bytes(model: PoseGrafModel, extra: dict | None = None) -> bytes:
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": model.cfg.to_dict(),
        "topology": model.topo.to_dict(),
        "params": [{"name": k, "shape": list(t.shape)} for k, t in model.params.items()],
    }
    if extra:
        manifest["extra"] = extra
    head = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(t.data, dtype="<f8").tobytes() for t in model.params.values())
    return MAGIC + struct.pack("<Q", len(head)) + head + body


def save_checkpoint(path, model: PoseGrafModel, extra: dict | None = None) -> None:
    with open(path, "wb") as f:
        f.write(checkpoint_bytes(model, extra))


def read_manifest(blob: bytes) -> tuple[dict, int]:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (n,) = struct.unpack("<Q", blob[8:16])
    manifest = json.loads(blob[16 : 16 + n].decode("utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {manifest.get('format_version')}")
    return manifest, 16 + n


def load_checkpoint(path) -> PoseGrafModel:
    with open(path, "rb") as f:
        blob = f.read()
    manifest, offset = read_manifest(blob)
    cfg = ModelConfig.from_dict(manifest["config"])
    model = PoseGrafModel(cfg, validate_topology(manifest["topology"]))
    entries = manifest["params"]
    if [e["name"] for e in entries] != list(model.params):
        raise CheckpointError("parameter names do not match the configuration")
    for e in entries:
        t = model.params[e["name"]]
        if tuple(e["shape"]) != t.shape:
            raise CheckpointError(f"{e['name']}: shape {e['shape']} but config expects {list(t.shape)}")
        size = int(np.prod(t.shape)) * 8
        chunk = blob[offset : offset + size]
        if len(chunk) != size:
            raise CheckpointError("checkpoint truncated")
        t.data[...] = np.frombuffer(chunk, dtype="<f8").reshape(t.shape)
        offset += size
    if offset != len(blob):
        raise CheckpointError("trailing bytes after the last parameter")
    return model
