"""Minimal binary PGM (P5) / PPM (P6) reading and writing, maxval 255."""

from __future__ import annotations

import numpy as np

from .errors import BadMagic, TruncatedRecord


def write_ppm(img: np.ndarray) -> bytes:
    """(H, W, 3) uint8 -> binary PPM."""
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError(f"expected (H, W, 3) uint8, got {img.shape} {img.dtype}")
    h, w = img.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode() + img.tobytes()


def write_pgm(img: np.ndarray) -> bytes:
    """(H, W) uint8 -> binary PGM."""
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError(f"expected (H, W) uint8, got {img.shape} {img.dtype}")
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode() + img.tobytes()


def read_netpbm(blob: bytes) -> np.ndarray:
    """Parse binary PGM/PPM into (H, W) or (H, W, 3) uint8."""
    magic = blob[:2]
    if magic not in (b"P5", b"P6"):
        raise BadMagic(f"expected P5/P6, got {magic!r}")
    # header: magic, width, height, maxval as whitespace/comment separated tokens
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncatedRecord("incomplete netpbm header")
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"only maxval 255 supported, got {maxval}")
    channels = 1 if magic == b"P5" else 3
    need = w * h * channels
    data = np.frombuffer(blob, dtype=np.uint8, count=-1, offset=pos)
    if data.size != need:
        raise TruncatedRecord(f"expected {need} pixel bytes, got {data.size}")
    if channels == 1:
        return data.reshape(h, w).copy()
    return data.reshape(h, w, 3).copy()


def luminance(img: np.ndarray) -> np.ndarray:
    """Gray copy of an image; BT.601 weights for color inputs."""
    if img.ndim == 2:
        return img.copy()
    gray = 0.299 * img[:, :, 0] + 0.587 * img[:, :, 1] + 0.114 * img[:, :, 2]
    return np.floor(gray + 0.5).astype(np.uint8)
