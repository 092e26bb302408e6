"""Parameter checkpoints: flat binary payload plus a JSON manifest.

Layout of the .bin file: 4-byte magic, u32 version, u32 header length,
UTF-8 JSON header listing tensor names and shapes in payload order, then
the little-endian f64 payloads back to back. A sibling .json manifest
carries the same shape table plus caller metadata. Loading rejects any
magic/version/shape mismatch.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

__all__ = ["save_checkpoint", "load_checkpoint", "CheckpointError"]

_MAGIC = b"AMKP"
_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray],
                    meta: dict | None = None) -> None:
    path = Path(path)
    names = list(tensors)
    header = json.dumps({
        "names": names,
        "shapes": {k: list(np.asarray(tensors[k]).shape) for k in names},
    }).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(header)))
        fh.write(header)
        for k in names:
            fh.write(np.ascontiguousarray(tensors[k], dtype="<f8").tobytes())
    manifest = {
        "format": "amodkit-checkpoint",
        "version": _VERSION,
        "tensors": {k: list(np.asarray(tensors[k]).shape) for k in names},
        "meta": meta or {},
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Returns (tensors, manifest metadata)."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != _MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    header = json.loads(blob[12:12 + header_len].decode())
    offset = 12 + header_len
    tensors = {}
    for name in header["names"]:
        shape = tuple(header["shapes"][name])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        tensors[name] = arr.astype(np.float64)
        offset += 8 * count
    manifest_path = path.with_suffix(path.suffix + ".json")
    meta = {}
    if manifest_path.exists():
        meta = json.loads(manifest_path.read_text()).get("meta", {})
    return tensors, meta


def load_into(path: str | Path, params: dict[str, np.ndarray]) -> dict:
    """Copy checkpoint values into existing arrays; shapes must match exactly."""
    tensors, meta = load_checkpoint(path)
    missing = set(params) - set(tensors)
    if missing:
        raise CheckpointError(f"checkpoint lacks tensors {sorted(missing)}")
    for name, target in params.items():
        src = tensors[name]
        if src.shape != target.shape:
            raise CheckpointError(
                f"shape mismatch for {name}: checkpoint {src.shape} vs model {target.shape}")
        target[...] = src
    return meta
