"""File formats: 16-bit PGM with a raw float64 sidecar, and KSP1 k-space files.

KSP1 layout (all little-endian)::

    b"KSP1"  u32 n1  u32 n2  u32 m  f64 sigma
    m records of  u32 bin  f64 re  f64 im

``bin`` is the row-major index ``row * n2 + col`` of the sampled frequency.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .types import Grid, KSpaceData, SamplingMask

KSP_MAGIC = b"KSP1"
_HEADER = struct.Struct("<4sIIId")
_RECORD = np.dtype([("bin", "<u4"), ("re", "<f8"), ("im", "<f8")])


class FormatError(ValueError):
    """Malformed file; ``offset`` is the byte position where parsing failed."""

    def __init__(self, message: str, offset: int, record: int | None = None):
        super().__init__(message)
        self.offset = offset
        self.record = record


def write_raw(path, values) -> None:
    """Write ``values`` as contiguous little-endian float64, row-major."""
    Path(path).write_bytes(np.ascontiguousarray(values, dtype="<f8").tobytes())


def read_raw(path, shape) -> np.ndarray:
    data = Path(path).read_bytes()
    expected = int(np.prod(shape)) * 8
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for shape {tuple(shape)}, got {len(data)}", len(data))
    return np.frombuffer(data, dtype="<f8").astype(float).reshape(shape)


def write_pgm16(path, image) -> tuple[float, float]:
    """Min-max scale a 2-D array to 0..65535 and write a binary PGM.

    Returns ``(lo, hi)``; pixel ``k`` maps back to ``lo + k (hi - lo) / 65535``.
    A constant image is written as all zeros.
    """
    a = np.asarray(image, dtype=float)
    if a.ndim != 2:
        raise ValueError("PGM images must be two-dimensional")
    lo, hi = float(a.min()), float(a.max())
    if hi > lo:
        scaled = np.rint((a - lo) / (hi - lo) * 65535.0)
    else:
        scaled = np.zeros_like(a)
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + scaled.astype(">u2").tobytes())
    return lo, hi


def read_pgm16(path) -> np.ndarray:
    """Read a binary PGM (8- or 16-bit) into an integer array."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header", pos)
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: bad PGM magic {tokens[0]!r}", 0)
    width, height, maxval = (int(t) for t in tokens[1:])
    pos += 1
    dtype = ">u2" if maxval > 255 else "u1"
    size = width * height * np.dtype(dtype).itemsize
    if len(data) - pos < size:
        raise FormatError(f"{path}: pixel data truncated", len(data))
    return np.frombuffer(data, dtype=dtype, count=width * height, offset=pos).reshape(height, width).astype(np.int64)


def pgm_to_float(pixels, lo: float, hi: float) -> np.ndarray:
    return lo + np.asarray(pixels, dtype=float) * ((hi - lo) / 65535.0)


def write_image(stem, values) -> dict:
    """Write ``stem.pgm`` (preview) and ``stem.f64`` (exact values).

    Arrays with more than two axes get a sidecar only. Returns the manifest
    entries describing the files.
    """
    stem = Path(stem)
    a = np.asarray(values)
    entry = {"raw": stem.name + ".f64", "shape": "x".join(str(s) for s in a.shape)}
    write_raw(stem.with_suffix(".f64"), a)
    if a.ndim == 2:
        lo, hi = write_pgm16(stem.with_suffix(".pgm"), a)
        entry.update(pgm=stem.name + ".pgm", lo=repr(lo), hi=repr(hi))
    return entry


def write_kspace(path, data: KSpaceData) -> None:
    n1, n2 = data.grid.shape
    rec = np.empty(data.m, dtype=_RECORD)
    rec["bin"] = data.mask.indices
    rec["re"] = data.samples.real
    rec["im"] = data.samples.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(KSP_MAGIC, n1, n2, data.m, float(data.noise_sigma)))
        fh.write(rec.tobytes())


def read_kspace(path) -> KSpaceData:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != KSP_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r} at byte offset 0, expected {KSP_MAGIC!r}", 0)
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: header truncated at byte offset {len(data)}", len(data))
    _, n1, n2, m, sigma = _HEADER.unpack_from(data)
    body = len(data) - _HEADER.size
    if body < m * _RECORD.itemsize:
        k = body // _RECORD.itemsize
        offset = _HEADER.size + k * _RECORD.itemsize
        raise FormatError(
            f"{path}: truncated at byte offset {len(data)}; record {k} of {m} (starting at byte offset {offset}) is missing",
            offset,
            record=k,
        )
    if body > m * _RECORD.itemsize:
        offset = _HEADER.size + m * _RECORD.itemsize
        raise FormatError(f"{path}: trailing bytes after the last record at byte offset {offset}", offset)
    rec = np.frombuffer(data, dtype=_RECORD, count=m, offset=_HEADER.size)
    grid = Grid(n1, n2)
    bins = rec["bin"].astype(np.int64)
    for k in np.flatnonzero((bins >= grid.n) | np.r_[False, np.diff(bins) <= 0]):
        raise FormatError(
            f"{path}: record {k} has bin {bins[k]}, bins must be increasing and below {grid.n}",
            _HEADER.size + int(k) * _RECORD.itemsize,
            record=int(k),
        )
    selected = np.zeros(grid.n, dtype=bool)
    selected[bins] = True
    mask = SamplingMask(selected.reshape(grid.shape))
    return KSpaceData(mask, rec["re"] + 1j * rec["im"], float(sigma))


def write_mask(stem, mask: SamplingMask) -> dict:
    return write_image(stem, np.asarray(mask.selected, dtype=float))


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
