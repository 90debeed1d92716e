"""Atomic solver checkpoints: a JSON header plus raw field payloads with checksums."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .dual import DualState
from .errors import ChecksumMismatch
from .grid import Field, GridSpec, _atomic_write

FORMAT = "nlhelmholtz-checkpoint/1"


def config_hash(obj) -> str:
    """sha256 of the canonical JSON form."""
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _payload(a: np.ndarray) -> bytes:
    a = np.asarray(a)
    raw = np.empty(a.size * 2, dtype="<f8")
    raw[0::2] = a.real.ravel()
    raw[1::2] = np.imag(a).ravel()
    return raw.tobytes()


def _unpayload(data: bytes, grid: GridSpec) -> np.ndarray:
    raw = np.frombuffer(data, dtype="<f8")
    return (raw[0::2] + 1j * raw[1::2]).reshape(grid.shape)


def save_checkpoint(path, grid: GridSpec, header: dict, fields: dict) -> Path:
    """Write ``fields`` (name -> array on grid) next to a JSON header.

    Payloads go first so a header never points at a missing file.
    """
    path = Path(path).with_suffix(".json")
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = {}
    for name, a in fields.items():
        if a is None:
            continue
        data = _payload(a)
        fname = f"{path.stem}.{name}.bin"
        _atomic_write(path.parent / fname, data)
        entries[name] = {"file": fname, "sha256": hashlib.sha256(data).hexdigest(),
                         "real": bool(np.isrealobj(a))}
    doc = {"format": FORMAT, "grid": grid.to_dict(), "header": header, "fields": entries}
    _atomic_write(path, json.dumps(doc, indent=1, sort_keys=True).encode())
    return path


def load_checkpoint(path) -> tuple[GridSpec, dict, dict]:
    path = Path(path).with_suffix(".json")
    try:
        doc = json.loads(path.read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ChecksumMismatch(f"unreadable checkpoint header {path}: {exc}") from exc
    if doc.get("format") != FORMAT:
        raise ChecksumMismatch(f"unknown checkpoint format {doc.get('format')!r}")
    gd = doc["grid"]
    grid = GridSpec(gd["dim"], gd["half_width"], gd["points_per_axis"])
    fields = {}
    for name, ent in doc["fields"].items():
        fp = path.parent / ent["file"]
        data = fp.read_bytes() if fp.exists() else b""
        if hashlib.sha256(data).hexdigest() != ent["sha256"]:
            raise ChecksumMismatch(f"payload {fp.name} does not match its checksum")
        a = _unpayload(data, grid)
        fields[name] = a.real.copy() if ent["real"] else a
    return grid, doc["header"], fields


def save_state(path, state: DualState) -> Path:
    header = {"J_value": state.J_value, "rayleigh": state.rayleigh,
              "crit_residual": state.crit_residual, "iteration": state.iteration,
              "realness_tag": bool(state.v.realness_tag)}
    v = state.v.values.real if state.v.realness_tag else state.v.values
    return save_checkpoint(path, state.v.grid, header, {"v": v})


def load_state(path) -> DualState:
    grid, h, f = load_checkpoint(path)
    return DualState(Field(grid, f["v"], h["realness_tag"]), h["J_value"], h["rayleigh"],
                     h["crit_residual"], h["iteration"])


def checkpoint_roundtrip(state: DualState, path) -> DualState:
    return load_state(save_state(path, state))
