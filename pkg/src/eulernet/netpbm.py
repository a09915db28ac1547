"""Binary PPM (P6) / PGM (P5) reading and writing, 8-bit only."""

from __future__ import annotations

import os

import numpy as np


class NetpbmError(ValueError):
    """Malformed or unsupported netpbm file."""


def _tokens(buf: bytes, path, count: int) -> tuple[list[bytes], int]:
    out, pos, n = [], 0, len(buf)
    while len(out) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise NetpbmError(f"{path}: truncated header")
        out.append(buf[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    return out, pos + 1


def read_pnm(path: str | os.PathLike) -> np.ndarray:
    """Return uint8 [H,W,3] for P6 or [H,W] for P5."""
    with open(path, "rb") as fh:
        buf = fh.read()
    try:
        (magic, w, h, maxval), offset = _tokens(buf, path, 4)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        if isinstance(exc, NetpbmError):
            raise
        raise NetpbmError(f"{path}: malformed header") from None
    if magic not in (b"P5", b"P6"):
        raise NetpbmError(f"{path}: unsupported magic {magic!r}")
    if maxval != 255 or w < 1 or h < 1:
        raise NetpbmError(f"{path}: need 8-bit maxval 255 and positive size, got {w}x{h} max {maxval}")
    ch = 3 if magic == b"P6" else 1
    need = w * h * ch
    raster = buf[offset:offset + need]
    if len(raster) != need:
        raise NetpbmError(f"{path}: raster has {len(raster)} bytes, expected {need}")
    arr = np.frombuffer(raster, dtype=np.uint8)
    return arr.reshape(h, w, 3) if ch == 3 else arr.reshape(h, w)


def write_ppm(path: str | os.PathLike, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb)
    if rgb.dtype != np.uint8 or rgb.ndim != 3 or rgb.shape[2] != 3:
        raise NetpbmError(f"{path}: write_ppm needs uint8 [H,W,3], got {rgb.dtype} {rgb.shape}")
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(rgb).tobytes())


def write_pgm(path: str | os.PathLike, gray: np.ndarray) -> None:
    gray = np.asarray(gray)
    if gray.dtype != np.uint8 or gray.ndim != 2:
        raise NetpbmError(f"{path}: write_pgm needs uint8 [H,W], got {gray.dtype} {gray.shape}")
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(gray).tobytes())


def to_uint8(x: np.ndarray) -> np.ndarray:
    """[0,1] floats to bytes, round half to even."""
    return np.clip(np.round(np.asarray(x, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
