"""Plain-text signal files and PGM images."""

from __future__ import annotations

import csv
import math
import re

import numpy as np


class ParseError(ValueError):
    """Malformed input file; the message carries the line or byte position."""


def write_csv_signal(path, u) -> None:
    """One row per line; 17 significant digits make the round trip exact."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim not in (1, 2):
        raise ValueError("only 1-d and 2-d signals can be written")
    if not np.all(np.isfinite(u)):
        raise ValueError("signal contains non-finite values")
    rows = u[:, None] if u.ndim == 1 else u
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for r in rows:
            w.writerow(["%.17g" % x for x in r])


def read_csv_signal(path, ndim: int | None = None) -> np.ndarray:
    """Read a signal; a single column gives a 1-d array unless ``ndim == 2``."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            vals = []
            for col, cell in enumerate(rec, start=1):
                try:
                    x = float(cell)
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: column {col}: not a number: {cell!r}") from None
                if not math.isfinite(x):
                    raise ParseError(f"{path}:{lineno}: column {col}: non-finite value {cell!r}")
                vals.append(x)
            if rows and len(vals) != len(rows[0]):
                raise ParseError(f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: empty file")
    a = np.array(rows, dtype=np.float64)
    if a.shape[1] == 1 and ndim != 2:
        return a[:, 0]
    return a


_TOKEN = re.compile(rb"\s*(#[^\n]*\n\s*)*([^\s#]+)")


def _header(data: bytes):
    pos = 0
    out = []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ParseError(f"truncated PGM header at byte {pos}")
        out.append(m.group(2))
        pos = m.end()
    return out, pos


def read_pgm(path) -> np.ndarray:
    """Load a P2 or P5 image as float64 intensities in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    (magic, w, h, mx), pos = _header(data)
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"{path}: byte 0: unsupported magic {magic!r}")
    try:
        w, h, mx = int(w), int(h), int(mx)
    except ValueError:
        raise ParseError(f"{path}: malformed header near byte {pos}") from None
    if w <= 0 or h <= 0 or not 0 < mx < 65536:
        raise ParseError(f"{path}: invalid dimensions or maxval in header")
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if mx > 255 else np.dtype("u1")
        need = w * h * dtype.itemsize
        if len(data) - pos < need:
            raise ParseError(f"{path}: byte {len(data)}: expected {need} pixel bytes after offset {pos}")
        px = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).astype(np.float64)
    else:
        toks = data[pos:].split()
        if len(toks) < w * h:
            raise ParseError(f"{path}: expected {w * h} pixels, found {len(toks)}")
        try:
            px = np.array([int(t) for t in toks[:w * h]], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"{path}: non-integer pixel value after byte {pos}: {exc}") from None
    if px.max() > mx:
        raise ParseError(f"{path}: pixel value exceeds maxval {mx}")
    return (px / mx).reshape(h, w)


def write_pgm(path, img, maxval: int = 65535, plain: bool = False) -> None:
    """Quantize ``[0, 1]`` intensities (values outside are clipped)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("PGM images are 2-d")
    if not 0 < maxval < 65536:
        raise ValueError("maxval must be in 1..65535")
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval).astype(np.int64)
    h, w = q.shape
    with open(path, "wb") as fh:
        if plain:
            fh.write(f"P2\n{w} {h}\n{maxval}\n".encode())
            for row in q:
                fh.write((" ".join(str(int(v)) for v in row) + "\n").encode())
        else:
            fh.write(f"P5\n{w} {h}\n{maxval}\n".encode())
            dtype = ">u2" if maxval > 255 else "u1"
            fh.write(q.astype(dtype).tobytes())
