"""The SSPA-FB on-disk feature bundle.

Byte layout (all integers little-endian):

    magic   4 bytes  b"SSPA"
    version u32      1
    C, M, d, n       u32 each
    payload n * (d + M*d + C) float32 values, per sample [x0 | X row-major | y]
    flag    u8       1 if a category-embedding block follows
    t_ka    C * d float32 (only when flag == 1)

Floats are stored as float32; in-memory arithmetic is float64, so writing
converts down and reading converts up at this boundary.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError

MAGIC = b"SSPA"
VERSION = 1
_HEADER = struct.Struct("<4sIIIII")


@dataclass
class BundleData:
    x0: np.ndarray  # (n, d)
    x: np.ndarray  # (n, M, d)
    y: np.ndarray  # (n, C)
    t_ka: np.ndarray | None  # (C, d) or None

    @property
    def n(self) -> int:
        return self.x0.shape[0]

    @property
    def d(self) -> int:
        return self.x0.shape[1]

    @property
    def m(self) -> int:
        return self.x.shape[1]

    @property
    def c(self) -> int:
        return self.y.shape[1]


def write_bundle(path, x0, x, y, t_ka=None) -> None:
    x0 = np.asarray(x0, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = x0.shape
    m = x.shape[1]
    c = y.shape[1]
    if x.shape != (n, m, d) or y.shape != (n, c):
        raise ValueError("inconsistent bundle array shapes")
    per_sample = np.concatenate([x0, x.reshape(n, m * d), y], axis=1)
    blob = bytearray()
    blob += _HEADER.pack(MAGIC, VERSION, c, m, d, n)
    blob += per_sample.astype("<f4").tobytes()
    if t_ka is None:
        blob += struct.pack("<B", 0)
    else:
        t_ka = np.asarray(t_ka, dtype=np.float64)
        if t_ka.shape != (c, d):
            raise ValueError(f"category embedding block must be ({c}, {d}), got {t_ka.shape}")
        blob += struct.pack("<B", 1)
        blob += t_ka.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)


def read_bundle(path) -> BundleData:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DataFormatError(f"{path}: unexpected end of file in header")
    magic, version, c, m, d, n = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    offset = _HEADER.size
    per = d + m * d + c
    need = n * per * 4
    if len(raw) < offset + need + 1:
        raise DataFormatError(f"{path}: unexpected end of file")
    payload = np.frombuffer(raw, dtype="<f4", count=n * per, offset=offset)
    payload = payload.astype(np.float64).reshape(n, per)
    offset += need
    (flag,) = struct.unpack_from("<B", raw, offset)
    offset += 1
    t_ka = None
    if flag == 1:
        if len(raw) < offset + c * d * 4:
            raise DataFormatError(f"{path}: unexpected end of file in embedding block")
        t_ka = np.frombuffer(raw, dtype="<f4", count=c * d, offset=offset)
        t_ka = t_ka.astype(np.float64).reshape(c, d)
    elif flag != 0:
        raise DataFormatError(f"{path}: bad embedding-block flag {flag}")
    x0 = payload[:, :d]
    x = payload[:, d : d + m * d].reshape(n, m, d)
    y = payload[:, d + m * d :]
    for name, arr in (("x0", x0), ("X", x), ("y", y), ("t_ka", t_ka)):
        if arr is not None and not np.isfinite(arr).all():
            raise DataFormatError(f"{path}: non-finite entries in {name}")
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataFormatError(f"{path}: labels must be multi-hot 0/1")
    return BundleData(x0=x0, x=x, y=y, t_ka=t_ka)


def write_manifest(path, categories: list[str], descriptions_file: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"categories": categories, "descriptions_file": descriptions_file}, fh, indent=2)


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if set(manifest) != {"categories", "descriptions_file"}:
        raise DataFormatError(f"{path}: bad manifest keys {sorted(manifest)}")
    return manifest
