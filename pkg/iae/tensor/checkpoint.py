"""Tensor checkpoint codec.

File layout (JSON, UTF-8)::

    {
      "format": "iae-tensors",
      "version": 1,
      "tensors": {
        "<name>": {"shape": [d0, d1, ...], "values": [row-major float64 ...]},
        ...
      }
    }

Names are written in sorted order. Floats are written with Python's shortest
round-trip repr, so load(save(x)) is bit-identical.
"""

import json
from pathlib import Path
from typing import Dict, Union

import numpy as np

from iae.core.errors import InputError, NonFiniteError

FORMAT_NAME = "iae-tensors"
FORMAT_VERSION = 1


def encode_tensors(tensors: Dict[str, np.ndarray]) -> dict:
    encoded = {}
    for name in sorted(tensors):
        array = np.asarray(tensors[name], dtype=np.float64)
        if not np.all(np.isfinite(array)):
            raise NonFiniteError(f"refusing to save non-finite tensor {name!r}")
        encoded[name] = {
            "shape": list(array.shape),
            "values": [float(v) for v in array.ravel(order="C")],
        }
    return {"format": FORMAT_NAME, "version": FORMAT_VERSION, "tensors": encoded}


def decode_tensors(payload: dict) -> Dict[str, np.ndarray]:
    if payload.get("format") != FORMAT_NAME:
        raise InputError(f"not a tensor checkpoint (format={payload.get('format')!r})")
    if payload.get("version") != FORMAT_VERSION:
        raise InputError(f"unsupported checkpoint version {payload.get('version')!r}")
    tensors = {}
    for name, entry in payload["tensors"].items():
        shape = tuple(int(d) for d in entry["shape"])
        values = np.asarray(entry["values"], dtype=np.float64)
        if values.size != int(np.prod(shape, dtype=np.int64)):
            raise InputError(
                f"tensor {name!r}: {values.size} values do not fill shape {shape}"
            )
        tensors[name] = values.reshape(shape)
    return tensors


def save_tensors(path: Union[str, Path], tensors: Dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(encode_tensors(tensors)), encoding="utf-8")
    return path


def load_tensors(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"checkpoint not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"checkpoint {path} is not valid JSON: {exc}")
    return decode_tensors(payload)
