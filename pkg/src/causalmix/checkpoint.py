"""Checkpoint files: one JSON document per model.

Layout: {"header": {"format_version": 1, "model_config_hash": ...},
"config": {...}, "params": {name: {"shape": [...], "values": b64}}}
where values are little-endian float64, base64 encoded.
"""

from __future__ import annotations

import base64
import hashlib
import json

import numpy as np

from .errors import DataError

FORMAT_VERSION = 1


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save_checkpoint(path, params, config):
    doc = {
        "header": {"format_version": FORMAT_VERSION,
                   "model_config_hash": config_hash(config)},
        "config": config,
        "params": {
            name: {
                "shape": list(arr.shape),
                "values": base64.b64encode(
                    np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode(),
            }
            for name, arr in params.items()
        },
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)


def load_checkpoint(path):
    """Returns (params: dict name -> ndarray, config: dict)."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    header = doc.get("header", {})
    if header.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint format in {path}")
    config = doc["config"]
    if header.get("model_config_hash") != config_hash(config):
        raise DataError(f"checkpoint config hash mismatch in {path}")
    params = {}
    for name, entry in doc["params"].items():
        raw = base64.b64decode(entry["values"])
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        params[name] = arr.reshape(entry["shape"])
    return params, config
