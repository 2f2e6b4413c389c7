"""Versioned JSON checkpoints holding nested dicts of arrays and scalars."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT = "avfbel-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _encode(obj):
    if isinstance(obj, np.ndarray):
        return {"__array__": list(obj.shape), "data": [float(v) for v in obj.ravel()]}
    if isinstance(obj, dict):
        return {str(k): _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if "__array__" in obj:
            return np.array(obj["data"], dtype=np.float64).reshape(obj["__array__"])
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def dumps(payload: dict) -> str:
    doc = {"format": FORMAT, "version": VERSION, "payload": _encode(payload)}
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def loads(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"not a checkpoint: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CheckpointError("not an avfbel checkpoint")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    return _decode(doc["payload"])


def save(path, payload: dict) -> None:
    Path(path).write_text(dumps(payload))


def load(path) -> dict:
    return loads(Path(path).read_text())
