"""Framework-neutral binary dumps and atomic file writes.

Logit dump layout (all little-endian):
    magic   4 bytes  b"GDKD"
    version u32      currently 1
    n       u64      sample count
    C       u32      class count
    data    n*C float32

The labels sidecar is n little-endian u32 values with no header.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "write_logits",
    "read_logits",
    "write_labels",
    "read_labels",
    "atomic_write_bytes",
    "atomic_write_text",
]

MAGIC = b"GDKD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQI")


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_logits(path, logits) -> None:
    """Write an (n, C) logit matrix as a float32 dump."""
    z = np.asarray(logits)
    if z.ndim != 2 or z.shape[1] < 2:
        raise ValueError(f"expected an (n, C) matrix with C >= 2, got shape {z.shape}")
    z = np.ascontiguousarray(z, dtype="<f4")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, z.shape[0], z.shape[1])
    atomic_write_bytes(path, header + z.tobytes())


def read_logits(path) -> np.ndarray:
    """Read a logit dump; returns float32 (n, C)."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, n, c = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * n * c
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    return data.reshape(n, c)


def write_labels(path, labels) -> None:
    """Write labels as headerless little-endian u32."""
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {y.shape}")
    if y.size and y.min() < 0:
        raise ValueError("labels must be nonnegative")
    atomic_write_bytes(path, np.ascontiguousarray(y, dtype="<u4").tobytes())


def read_labels(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) % 4:
        raise ValueError(f"{path}: size {len(raw)} is not a multiple of 4")
    return np.frombuffer(raw, dtype="<u4").astype(np.int64)
