"""Binary grid files with JSON sidecars, and log-scaled PGM previews.

Layout: 8-byte magic ``HBNGRID\\0``, little-endian uint32 format version,
little-endian uint32 kind (0 = real float64, 1 = complex as interleaved
float64 pairs), then the array in row-major order. Shape and physical
metadata live in ``<file>.json``.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"HBNGRID\x00"
VERSION = 1
HEADER = struct.Struct("<8sII")
REAL, COMPLEX = 0, 1


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_grid(path, values, meta=None):
    """Write ``values`` (2-D real or complex) and its sidecar; returns both paths."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("grid arrays must be two-dimensional")
    if np.iscomplexobj(values):
        kind = COMPLEX
        payload = np.ascontiguousarray(values, dtype="<c16")
    else:
        kind = REAL
        payload = np.ascontiguousarray(values, dtype="<f8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, kind))
        fh.write(payload.tobytes(order="C"))
    side = dict(meta or {})
    side.update(shape=list(values.shape), kind="complex128" if kind else "float64",
                byte_order="little", header_bytes=HEADER.size)
    sc = sidecar_path(path)
    sc.write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    return path, sc


def read_grid(path):
    """Read a grid file; returns ``(array, sidecar dict)``."""
    path = Path(path)
    raw = path.read_bytes()
    magic, version, kind = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a grid file")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported grid format version {version}")
    meta = json.loads(sidecar_path(path).read_text())
    dtype = "<c16" if kind == COMPLEX else "<f8"
    arr = np.frombuffer(raw, dtype=dtype, offset=HEADER.size).reshape(meta["shape"])
    return arr.astype(np.complex128 if kind == COMPLEX else np.float64), meta


def write_log_pgm(path, values, decades=6.0):
    """8-bit binary PGM of ``log10(values)`` spanning ``decades`` below the maximum.

    Row 0 of the image is the top (largest y), matching a plot with y upwards.
    """
    v = np.asarray(values, dtype=float)
    top = float(v.max()) if v.size else 0.0
    if top > 0:
        with np.errstate(divide="ignore"):
            lg = np.log10(np.maximum(v, 0.0) / top)
        scaled = np.clip((lg + decades) / decades, 0.0, 1.0)
    else:
        scaled = np.zeros_like(v)
    img = np.round(scaled * 255).astype(np.uint8)[::-1]
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return Path(path)
