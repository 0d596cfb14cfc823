"""Base64 array blobs used inside JSON files.

A blob is ``{"shape": [...], "dtype": "<f8", "data": "<base64>"}`` with
row-major little-endian float64 payload. Integer-valued arrays (face and
parent indices) are stored in the same encoding and checked for
integrality on load.
"""

from __future__ import annotations

import base64

import numpy as np

from .errors import SchemaError

__all__ = ["encode_array", "decode_array"]

_DTYPE_TAG = "<f8"


def encode_array(arr: np.ndarray) -> dict:
    a = np.ascontiguousarray(arr, dtype="<f8")
    return {
        "shape": list(a.shape),
        "dtype": _DTYPE_TAG,
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def decode_array(obj: object, where: str) -> np.ndarray:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected a blob object, got {type(obj).__name__}")
    for key in ("shape", "dtype", "data"):
        if key not in obj:
            raise SchemaError(f"{where}: blob is missing key {key!r}")
    if obj["dtype"] != _DTYPE_TAG:
        raise SchemaError(f"{where}: unsupported blob dtype {obj['dtype']!r}")
    try:
        raw = base64.b64decode(obj["data"], validate=True)
    except Exception as exc:
        raise SchemaError(f"{where}: invalid base64 payload ({exc})") from exc
    shape = tuple(int(s) for s in obj["shape"])
    expected = int(np.prod(shape, dtype=np.int64)) * 8
    if len(raw) != expected:
        raise SchemaError(
            f"{where}: payload is {len(raw)} bytes, shape {shape} needs {expected}"
        )
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
