"""Writer/reader for the tensor container format consumed by the percep
toolkit.

Layout: bytes 0-7 little-endian u64 header length N; bytes 8..8+N UTF-8
JSON mapping tensor name -> {"dtype": "F32", "shape": [...],
"data_offsets": [begin, end]}; then the raw little-endian float32 payload.
"""
import json
import struct
from pathlib import Path

import numpy as np


class ContainerFormatError(Exception):
    pass


def write_container(path, tensors):
    """Write named float32 tensors; byte-deterministic for equal inputs."""
    entries = {}
    payload = bytearray()
    for name in sorted(tensors):
        arr = np.ascontiguousarray(np.asarray(tensors[name], dtype="<f4"))
        begin = len(payload)
        payload.extend(arr.tobytes())
        entries[name] = {
            "dtype": "F32",
            "shape": [int(d) for d in arr.shape],
            "data_offsets": [begin, len(payload)],
        }
    header = json.dumps(entries, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(bytes(payload))


def read_container(path):
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ContainerFormatError(f"{path}: missing header length")
    (header_len,) = struct.unpack("<Q", raw[:8])
    try:
        header = json.loads(raw[8:8 + header_len])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerFormatError(f"{path}: malformed header: {exc}") from exc
    payload = raw[8 + header_len:]
    tensors = {}
    for name, entry in header.items():
        if entry.get("dtype") != "F32":
            raise ContainerFormatError(
                f"{path}: tensor {name!r} has unsupported dtype"
            )
        begin, end = entry["data_offsets"]
        if end > len(payload) or end - begin != 4 * int(np.prod(entry["shape"])):
            raise ContainerFormatError(f"{path}: bad byte range for {name!r}")
        tensors[name] = np.frombuffer(payload[begin:end], dtype="<f4").reshape(
            entry["shape"]).copy()
    return tensors
