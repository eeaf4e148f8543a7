"""Binary PGM (P5) / PPM (P6) codec, 8-bit maxval 255 only.

Decoded pixels are float32 in [0, 1]; PGM yields [1,H,W], PPM [3,H,W].
"""
import re
from pathlib import Path

import numpy as np

from .errors import ImageFormatError, ShapeError

_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def _read_header_tokens(raw, count, path):
    """Pull `count` whitespace/comment-separated tokens after the magic."""
    tokens = []
    pos = 2  # after magic
    while len(tokens) < count:
        match = _TOKEN.match(raw, pos)
        if match is None:
            raise ImageFormatError(f"{path}: truncated header")
        token = match.group(1)
        if token.startswith(b"#"):
            nl = raw.find(b"\n", match.start(1))
            if nl < 0:
                raise ImageFormatError(f"{path}: truncated header")
            pos = nl + 1
            continue
        tokens.append(token)
        pos = match.end(1)
    return tokens, pos


def decode_image(path):
    """Decode a binary PGM/PPM file to float32 [C,H,W] in [0, 1]."""
    raw = Path(path).read_bytes()
    if len(raw) < 2 or raw[:2] not in (b"P5", b"P6"):
        magic = raw[:2].decode("latin1", "replace") if raw else "(empty)"
        raise ImageFormatError(
            f"{path}: unsupported magic number {magic!r} (need P5 or P6)"
        )
    channels = 1 if raw[:2] == b"P5" else 3
    tokens, pos = _read_header_tokens(raw, 3, path)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise ImageFormatError(f"{path}: non-numeric header field") from exc
    if width <= 0 or height <= 0:
        raise ImageFormatError(f"{path}: non-positive image dimensions")
    if maxval != 255:
        raise ImageFormatError(f"{path}: maxval {maxval} unsupported (need 255)")
    # exactly one whitespace byte separates header from payload
    payload = raw[pos + 1:]
    need = width * height * channels
    if len(payload) < need:
        raise ImageFormatError(
            f"{path}: truncated payload ({len(payload)} of {need} bytes)"
        )
    pixels = np.frombuffer(payload[:need], dtype=np.uint8)
    if channels == 1:
        img = pixels.reshape(1, height, width)
    else:
        img = pixels.reshape(height, width, 3).transpose(2, 0, 1)
    return (img.astype(np.float32) / np.float32(255.0))


def _as_u8(img):
    arr = np.asarray(img, dtype=np.float64)
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def encode_pgm(path, img):
    """Write a [H,W] or [1,H,W] image in [0, 1] as binary PGM."""
    arr = np.asarray(img)
    if arr.ndim == 3:
        if arr.shape[0] != 1:
            raise ShapeError(f"encode_pgm needs 1 channel, got {arr.shape[0]}")
        arr = arr[0]
    if arr.ndim != 2:
        raise ShapeError(f"encode_pgm expects [H,W] or [1,H,W], got {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(_as_u8(arr).tobytes())


def encode_ppm(path, img):
    """Write a [3,H,W] image in [0, 1] as binary PPM."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ShapeError(f"encode_ppm expects [3,H,W], got {arr.shape}")
    _, h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(_as_u8(arr.transpose(1, 2, 0)).tobytes())


def to_luminance(img):
    """Collapse [C,H,W] to a single [H,W] luminance plane (Rec. 601 for RGB)."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim != 3:
        raise ShapeError(f"expected [C,H,W] or [H,W], got {arr.shape}")
    if arr.shape[0] == 1:
        return arr[0]
    if arr.shape[0] == 3:
        r, g, b = arr
        return 0.299 * r + 0.587 * g + 0.114 * b
    raise ShapeError(f"cannot take luminance of {arr.shape[0]} channels")
