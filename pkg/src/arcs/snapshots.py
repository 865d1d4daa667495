"""Binary field snapshots and the manifest index.

Layout (little endian): 4-byte magic ``ARCS``, u16 version, u16 dim, then two
u32 cell counts (the second is 0 for 1D), followed by float64 values in
row-major order.
"""
from __future__ import annotations

import csv
import os
import struct

import numpy as np

MAGIC = b"ARCS"
VERSION = 1
_HEADER = struct.Struct("<4sHHII")
MANIFEST_COLUMNS = ("time", "field", "path")


def write_snapshot(path, field):
    field = np.ascontiguousarray(field, dtype="<f8")
    if field.ndim not in (1, 2):
        raise ValueError("snapshots hold 1D or 2D fields")
    cells = list(field.shape) + [0] * (2 - field.ndim)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, field.ndim, *cells))
        fh.write(field.tobytes(order="C"))


def read_snapshot(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, dim, n0, n1 = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        shape = (n0,) if dim == 1 else (n0, n1)
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {np.prod(shape)} values, found {data.size}")
    return data.reshape(shape).astype(float)


class SnapshotWriter:
    """Writes u, v, w per output time and keeps ``manifest.csv`` in sync."""

    def __init__(self, directory, enabled=True):
        self.directory = directory
        self.enabled = enabled
        self.rows = []
        self._count = 0
        if enabled:
            os.makedirs(os.path.join(directory, "snapshots"), exist_ok=True)

    def __call__(self, state):
        if not self.enabled:
            return
        for name in ("u", "v", "w"):
            rel = os.path.join("snapshots", f"{name}_{self._count:06d}.bin")
            write_snapshot(os.path.join(self.directory, rel), getattr(state, name))
            self.rows.append((format(float(state.t), ".17g"), name, rel))
        self._count += 1

    def write_manifest(self):
        with open(os.path.join(self.directory, "manifest.csv"), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(MANIFEST_COLUMNS)
            writer.writerows(self.rows)


def read_manifest(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != MANIFEST_COLUMNS:
            raise ValueError(f"unexpected manifest header {header}")
        return [(float(t), f, p) for t, f, p in reader]
