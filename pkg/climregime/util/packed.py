"""
Packed binary framing shared by gridded series files and model checkpoints.

A packed file is a single-line JSON header, one newline byte, and a raw
little-endian float32 payload. The header describes how to slice the payload.
"""

import json
from typing import Any, Dict, Tuple

import numpy as np

from ..exceptions import DataError

PACKED_DTYPE = np.dtype("<f4")


def write_packed(path: str, header: Dict[str, Any], payload: np.ndarray) -> None:
    """Write ``header`` followed by ``payload`` cast to little-endian f32."""
    header = dict(header)
    header["dtype"] = "f32"
    text = json.dumps(header, sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as f:
        f.write(text.encode("utf-8"))
        f.write(b"\n")
        f.write(np.ascontiguousarray(payload, dtype=PACKED_DTYPE).tobytes())


def read_packed(path: str) -> Tuple[Dict[str, Any], np.ndarray]:
    """Return the decoded header and the flat f32 payload (as float64)."""
    with open(path, "rb") as f:
        raw = f.read()

    newline = raw.find(b"\n")
    if newline < 0:
        raise DataError(f"{path}: missing header terminator")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"{path}: malformed header ({e})") from e
    if not isinstance(header, dict):
        raise DataError(f"{path}: header must be a JSON object")
    if header.get("dtype") != "f32":
        raise DataError(f"{path}: unsupported element type {header.get('dtype')!r}")

    body = raw[newline + 1 :]
    if len(body) % PACKED_DTYPE.itemsize:
        raise DataError(f"{path}: payload length is not a multiple of 4 bytes")
    payload = np.frombuffer(body, dtype=PACKED_DTYPE).astype(np.float64)
    return header, payload
