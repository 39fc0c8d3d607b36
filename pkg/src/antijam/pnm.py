"""Netpbm readers and writers: plain PBM masks and PGM count images."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _tokens(data: bytes, count: int, start: int = 0):
    """Pull `count` whitespace-separated header tokens, skipping # comments.

    Returns the tokens and the offset just past the last one.
    """
    out = []
    pos = start
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise InvalidArgumentError("truncated netpbm header")
        begin = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        out.append(data[begin:pos])
    return out, pos


def _strip_comments(body: bytes) -> bytes:
    return b"\n".join(line.split(b"#", 1)[0] for line in body.splitlines())


def read_pbm(path) -> np.ndarray:
    """Read a PBM bitmap (P1 or P4) as a boolean array; 1 (black) is True."""
    data = Path(path).read_bytes()
    (magic, w, h), pos = _tokens(data, 3)
    width, height = int(w), int(h)
    if magic == b"P1":
        digits = [c for c in _strip_comments(data[pos:]) if c in b"01"]
        if len(digits) < width * height:
            raise InvalidArgumentError(f"{path}: expected {width * height} pixels, found {len(digits)}")
        bits = np.array(digits[: width * height], dtype=np.uint8) - ord("0")
        return bits.reshape(height, width).astype(bool)
    if magic == b"P4":
        row_bytes = (width + 7) // 8
        raw = np.frombuffer(data, dtype=np.uint8, count=row_bytes * height, offset=pos + 1)
        bits = np.unpackbits(raw.reshape(height, row_bytes), axis=1)[:, :width]
        return bits.astype(bool)
    raise InvalidArgumentError(f"{path}: not a PBM file (magic {magic!r})")


def pbm_bytes(mask: np.ndarray) -> bytes:
    mask = np.asarray(mask, dtype=bool)
    height, width = mask.shape
    rows = [" ".join("1" if v else "0" for v in row) for row in mask]
    return (f"P1\n{width} {height}\n" + "\n".join(rows) + "\n").encode("ascii")


def write_pbm(path, mask: np.ndarray) -> None:
    atomic_write_bytes(path, pbm_bytes(mask))


def pgm_bytes(image: np.ndarray, binary: bool = True, maxval: int | None = None) -> bytes:
    """Encode a non-negative image as PGM.

    Real values are rounded to the nearest integer.  `maxval` defaults to
    the observed maximum (at least 1).
    """
    image = np.asarray(image)
    if image.ndim != 2:
        raise InvalidArgumentError("PGM images must be two-dimensional")
    if np.any(image < 0) or not np.all(np.isfinite(image)):
        raise InvalidArgumentError("PGM images must be finite and non-negative")
    pixels = np.rint(image).astype(np.int64)
    peak = int(pixels.max()) if pixels.size else 0
    if maxval is None:
        maxval = max(peak, 1)
    if not 1 <= maxval <= 65535:
        raise InvalidArgumentError(f"PGM maxval must be in [1, 65535], got {maxval}")
    if peak > maxval:
        raise InvalidArgumentError(f"pixel value {peak} exceeds maxval {maxval}")
    height, width = pixels.shape
    header = f"{'P5' if binary else 'P2'}\n{width} {height}\n{maxval}\n".encode("ascii")
    if binary:
        dtype = ">u1" if maxval < 256 else ">u2"
        return header + pixels.astype(dtype).tobytes()
    rows = [" ".join(str(v) for v in row) for row in pixels]
    return header + ("\n".join(rows) + "\n").encode("ascii")


def write_pgm(path, image: np.ndarray, binary: bool = True, maxval: int | None = None) -> None:
    atomic_write_bytes(path, pgm_bytes(image, binary=binary, maxval=maxval))


def read_pgm(path) -> np.ndarray:
    """Read a P2 or P5 graymap into an int64 array."""
    data = Path(path).read_bytes()
    (magic, w, h, m), pos = _tokens(data, 4)
    width, height, maxval = int(w), int(h), int(m)
    if magic == b"P2":
        values = np.array(_strip_comments(data[pos:]).split(), dtype=np.int64)
        if values.size < width * height:
            raise InvalidArgumentError(f"{path}: truncated P2 pixel data")
        pixels = values[: width * height]
    elif magic == b"P5":
        dtype = ">u1" if maxval < 256 else ">u2"
        pixels = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos + 1).astype(np.int64)
    else:
        raise InvalidArgumentError(f"{path}: not a PGM file (magic {magic!r})")
    if pixels.max(initial=0) > maxval:
        raise InvalidArgumentError(f"{path}: pixel exceeds declared maxval {maxval}")
    return pixels.reshape(height, width)
