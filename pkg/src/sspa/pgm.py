"""Binary (P5) 8-bit PGM export for patch-grid heatmaps."""

from __future__ import annotations

import math

import numpy as np


def patch_grid_shape(m: int) -> tuple[int, int]:
    """sqrt(M) x sqrt(M) when M is a perfect square, else M x 1."""
    side = math.isqrt(m)
    return (side, side) if side * side == m else (m, 1)


def write_pgm(path, values: np.ndarray) -> None:
    """Min-max normalize a 2-d array into 8-bit gray and write binary PGM."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("PGM export needs a 2-d array")
    lo, hi = values.min(), values.max()
    if hi > lo:
        gray = np.round((values - lo) / (hi - lo) * 255.0)
    else:
        gray = np.zeros_like(values)
    gray = gray.astype(np.uint8)
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read back a binary PGM written by :func:`write_pgm` (for tests)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(b"P5"):
        raise ValueError("not a binary PGM file")
    header, _, rest = raw.partition(b"255\n")
    dims = header.split()[1:3]
    w, h = int(dims[0]), int(dims[1])
    return np.frombuffer(rest, dtype=np.uint8, count=w * h).reshape(h, w)
