"""Checkpoint container: named float64 tensors plus provenance metadata.

The on-disk form is a single JSON document. Array bytes are stored as base64
little-endian float64, so a save/load round trip is exact to the bit. Every
checkpoint records fingerprints of the artifacts it was trained against;
loaders verify them to catch stage-order mistakes.
"""

from __future__ import annotations

import base64
import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import CheckpointError
from .tensor import Tensor

FORMAT_VERSION = 1


def fingerprint_bytes(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def fingerprint_json(obj: Any) -> str:
    """Stable fingerprint of a JSON-serializable object."""
    return fingerprint_bytes(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode())


def _encode_array(a: np.ndarray) -> dict[str, Any]:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(d: dict[str, Any]) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(np.float64)


def save_checkpoint(path: str | Path, params: dict[str, Tensor], meta: dict[str, Any]) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "meta": meta,
        "tensors": {k: _encode_array(p.data) for k, p in sorted(params.items())},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_checkpoint(path: str | Path) -> tuple[dict[str, Tensor], dict[str, Any]]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format {doc.get('format_version')!r} in {path}"
        )
    params = {
        k: Tensor(_decode_array(d), requires_grad=True, name=k) for k, d in doc["tensors"].items()
    }
    return params, doc["meta"]


def require_meta(meta: dict[str, Any], key: str, expected: Any, context: str) -> None:
    """Assert a stored fingerprint matches; raise a stage-order error if not."""
    from ..errors import StageOrderError

    actual = meta.get(key)
    if actual != expected:
        raise StageOrderError(
            f"{context}: checkpoint records {key}={actual!r} but the current "
            f"pipeline provides {expected!r}; re-run the earlier stage"
        )
