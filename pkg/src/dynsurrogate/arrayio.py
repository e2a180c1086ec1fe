"""Portable on-disk array and metadata format.

Arrays are stored as raw little-endian float64 in C order (``<name>.f64``)
with a JSON sidecar header (``<name>.json``) carrying magic, version, shape,
dtype, and byte order.  Metadata files are canonical JSON (sorted keys, LF
endings) so identical runs produce byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError

MAGIC = "F64ARR"
VERSION = 1


def save_array(path, array: np.ndarray) -> None:
    """Write ``path.f64`` + ``path.json`` (pass path without extension)."""
    path = Path(path)
    array = np.ascontiguousarray(np.asarray(array, dtype="<f8"))
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "magic": MAGIC,
        "version": VERSION,
        "shape": list(array.shape),
        "dtype": "<f8",
        "order": "C",
    }
    path.with_suffix(".json").write_text(canonical_json(header), encoding="utf-8")
    path.with_suffix(".f64").write_bytes(array.tobytes(order="C"))


def load_array(path) -> np.ndarray:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    if header.get("magic") != MAGIC:
        raise InvalidArgumentError(f"{path}: not a {MAGIC} array")
    if header.get("version") != VERSION:
        raise InvalidArgumentError(f"{path}: unsupported version {header.get('version')}")
    data = np.frombuffer(path.with_suffix(".f64").read_bytes(), dtype="<f8")
    return data.reshape(header["shape"]).copy()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def save_metadata(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(obj), encoding="utf-8")


def load_metadata(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
