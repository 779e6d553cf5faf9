"""Tensor and matrix file formats.

Two tensor formats are supported:

* COO text: CSV with header ``i,j,k,value``, 1-based indices, unlisted
  entries are zero.  Dimensions are the maximum index per mode unless
  given explicitly.
* Binary: magic ``T3D1``, three little-endian ``u64`` dims, then
  ``p1*p2*p3`` little-endian ``f64`` in C (mode-3 fastest) order.
"""
import csv
import struct

import numpy as np

from .errors import DimensionError
from .tensor import as_tensor3

MAGIC = b"T3D1"
_HEADER = struct.Struct("<4sQQQ")


def write_binary(path, t):
    t = as_tensor3(t)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, *t.shape))
        fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def read_binary(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise DimensionError(f"{path}: truncated header")
        magic, p1, p2, p3 = _HEADER.unpack(head)
        if magic != MAGIC:
            raise DimensionError(f"{path}: bad magic {magic!r}")
        payload = fh.read()
    n = p1 * p2 * p3
    if n == 0:
        raise DimensionError(f"{path}: zero dimension in {(p1, p2, p3)}")
    if len(payload) != 8 * n:
        raise DimensionError(f"{path}: expected {8 * n} data bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f8").astype(float).reshape(p1, p2, p3)


def write_coo(path, t, skip_zeros=True):
    t = as_tensor3(t)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "k", "value"])
        for idx in np.ndindex(*t.shape):
            v = t[idx]
            if skip_zeros and v == 0.0:
                continue
            w.writerow([idx[0] + 1, idx[1] + 1, idx[2] + 1, repr(float(v))])
        # keep the shape recoverable when trailing entries are zero
        last = tuple(p - 1 for p in t.shape)
        if skip_zeros and t[last] == 0.0:
            w.writerow([*t.shape, "0.0"])


def read_coo(path, dims=None):
    entries = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["i", "j", "k", "value"]:
            raise DimensionError(f"{path}: expected header 'i,j,k,value', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise DimensionError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                i, j, k = (int(c) for c in row[:3])
                v = float(row[3])
            except ValueError as exc:
                raise DimensionError(f"{path}:{lineno}: {exc}") from None
            if min(i, j, k) < 1:
                raise DimensionError(f"{path}:{lineno}: indices are 1-based")
            entries.append((i, j, k, v))
    if not entries and dims is None:
        raise DimensionError(f"{path}: no entries and no dimensions given")
    if dims is None:
        dims = tuple(max(e[m] for e in entries) for m in range(3))
    t = np.zeros(tuple(int(p) for p in dims))
    for i, j, k, v in entries:
        if i > t.shape[0] or j > t.shape[1] or k > t.shape[2]:
            raise DimensionError(f"{path}: index {(i, j, k)} exceeds dims {t.shape}")
        t[i - 1, j - 1, k - 1] = v
    return t


def read_tensor(path, dims=None):
    """Read either format, sniffing the magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_binary(path)
    return read_coo(path, dims=dims)


def write_matrix_csv(path, m):
    np.savetxt(path, np.atleast_2d(m), delimiter=",", fmt="%.17g")


def read_matrix_csv(path):
    return np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2))
