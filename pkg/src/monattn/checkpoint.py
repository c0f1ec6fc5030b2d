"""Checkpoint files: one JSON document with a SHA-256 checksum over its payload.

Layout::

    {
      "format": "monattn-checkpoint",
      "version": 1,
      "checksum": "<sha256 of the canonical payload JSON>",
      "payload": {
        "step": int,
        "task": {"vocab_size", "seed", "expansion_table"},
        "task_sha256": str,
        "train_config": {...TrainConfig fields...},
        "rng_state": {"noise": {...}, "data": {...}},
        "params": {name: {"shape": [...], "data": [row-major floats]}}
      }
    }

Floats are written with ``repr`` precision, so a save/load round trip is
lossless and re-saving a loaded checkpoint reproduces the same bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .task import TaskSpec
from .training import ModelCheckpoint, TrainConfig

FORMAT = "monattn-checkpoint"
VERSION = 1


class CheckpointError(Exception):
    """The checkpoint file is unreadable, corrupt, or from another version."""


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def to_document(ck: ModelCheckpoint) -> dict:
    payload = {
        "step": int(ck.step),
        "task": ck.task.to_dict(),
        "task_sha256": ck.task.digest(),
        "train_config": ck.config.to_dict(),
        "rng_state": ck.rng_state,
        "params": {
            name: {"shape": list(arr.shape), "data": [float(x) for x in np.ravel(arr)]}
            for name, arr in sorted(ck.params.items())
        },
    }
    checksum = hashlib.sha256(_canonical(payload).encode()).hexdigest()
    return {"format": FORMAT, "version": VERSION, "checksum": checksum, "payload": payload}


def from_document(doc: dict) -> ModelCheckpoint:
    try:
        if doc.get("format") != FORMAT:
            raise CheckpointError(f"not a {FORMAT} file")
        if doc.get("version") != VERSION:
            raise CheckpointError(f"checkpoint version {doc.get('version')} != supported {VERSION}")
        payload = doc["payload"]
        if hashlib.sha256(_canonical(payload).encode()).hexdigest() != doc["checksum"]:
            raise CheckpointError("checksum mismatch: checkpoint is corrupt")
        task = TaskSpec.from_dict(payload["task"])
        if task.digest() != payload["task_sha256"]:
            raise CheckpointError("task hash does not match the stored task")
        params = {
            name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in payload["params"].items()
        }
        config = TrainConfig.from_dict(payload["train_config"])
        return ModelCheckpoint(params, task, config, int(payload["step"]), payload["rng_state"])
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc!r}") from None


def save_checkpoint(path, ck: ModelCheckpoint) -> None:
    text = json.dumps(to_document(ck), sort_keys=True, indent=1, allow_nan=False)
    Path(path).write_text(text + "\n")


def load_checkpoint(path) -> ModelCheckpoint:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path} is not valid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise CheckpointError(f"{path} does not hold a checkpoint object")
    return from_document(doc)
