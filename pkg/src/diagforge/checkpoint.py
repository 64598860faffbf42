"""Versioned self-describing checkpoint container.

One .npz file holds a JSON metadata header plus named float64 arrays.
Shared by the diffusion and classifier estimators; the metadata carries
the architecture signature so incompatible files fail loudly.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError

CONTAINER_FORMAT = "diagforge-checkpoint"
CONTAINER_VERSION = 1


def save_checkpoint(path, meta: dict, arrays: dict) -> None:
    """Write metadata and float64 arrays to path (npz container)."""
    header = {
        "format": CONTAINER_FORMAT,
        "version": CONTAINER_VERSION,
        **meta,
    }
    payload = {"__meta__": np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)}
    for k, v in arrays.items():
        arr = np.asarray(v)
        if arr.dtype.kind == "f":
            arr = arr.astype(np.float64)
        payload[k] = arr
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.BytesIO()
    np.savez(buf, **payload)
    path.write_bytes(buf.getvalue())


def load_checkpoint(path, expected_kind: str | None = None) -> tuple[dict, dict]:
    """Read (meta, arrays); validates format, version, and kind."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path) as z:
            files = dict(z)
    except Exception as e:
        raise CheckpointError(f"unreadable checkpoint {path}: {e}") from e
    raw = files.pop("__meta__", None)
    if raw is None:
        raise CheckpointError(f"checkpoint {path} has no metadata header")
    try:
        meta = json.loads(raw.tobytes().decode())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt metadata in {path}: {e}") from e
    if meta.get("format") != CONTAINER_FORMAT:
        raise CheckpointError(f"not a checkpoint container: format={meta.get('format')!r}")
    if meta.get("version") != CONTAINER_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {meta.get('version')!r}")
    if expected_kind is not None and meta.get("kind") != expected_kind:
        raise CheckpointError(
            f"checkpoint kind {meta.get('kind')!r} does not match expected {expected_kind!r}"
        )
    return meta, files
