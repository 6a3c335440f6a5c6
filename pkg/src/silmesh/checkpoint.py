"""Binary checkpoint format.

Layout: 4-byte magic ``P3DF``, one version byte, a little-endian uint32
manifest length, the UTF-8 JSON manifest, then the raw float32 array
payloads concatenated in manifest order (row major, little endian).
Arrays are written sorted by name so identical state always produces
byte-identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import CheckpointFormatError

MAGIC = b"P3DF"
VERSION = 1


def save_checkpoint(path: str, arrays: dict[str, np.ndarray],
                    scalars: dict | None = None) -> None:
    """Write named float32 arrays plus a flat JSON scalar dict."""
    names = sorted(arrays)
    manifest = {
        "arrays": [{"name": n, "shape": list(np.asarray(arrays[n]).shape)}
                   for n in names],
        "scalars": scalars or {},
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(arrays[n], dtype="<f4").tobytes())


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint back into (arrays, scalars)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 9 or raw[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic")
    if raw[4] != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {raw[4]}")
    (mlen,) = struct.unpack("<I", raw[5:9])
    if len(raw) < 9 + mlen:
        raise CheckpointFormatError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[9:9 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: unreadable manifest: {exc}") from exc
    arrays: dict[str, np.ndarray] = {}
    offset = 9 + mlen
    for entry in manifest.get("arrays", []):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = offset + 4 * count
        if end > len(raw):
            raise CheckpointFormatError(f"{path}: truncated payload at {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(
            raw, dtype="<f4", count=count, offset=offset).reshape(shape).copy()
        offset = end
    if offset != len(raw):
        raise CheckpointFormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return arrays, manifest.get("scalars", {})
