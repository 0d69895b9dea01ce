"""Flat binary checkpoint container.

Layout: magic "WSEG", format version (u32), entry count (u32), then per
entry: name length (u16), UTF-8 name, rank (u8), extents as u64, and the
raw values as little-endian IEEE-754 doubles.  Values are widened to double
on write so the round trip is bit-exact for both build precisions.
"""

import struct
from collections import OrderedDict

import numpy as np

from .exceptions import DataError

MAGIC = b"WSEG"
VERSION = 1


def save_checkpoint(path, entries):
    """Write name -> array mapping to `path`."""
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", VERSION, len(entries)))
            for name, arr in entries.items():
                raw = name.encode("utf-8")
                if len(raw) > 0xFFFF:
                    raise DataError(f"entry name too long: {name[:40]}...")
                arr = np.asarray(arr, dtype=np.float64)
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<B", arr.ndim))
                for extent in arr.shape:
                    fh.write(struct.pack("<Q", extent))
                fh.write(arr.astype("<f8", copy=False).tobytes())
    except OSError as err:
        raise DataError(f"{path}: cannot write checkpoint ({err})") from err


def _read(fh, n, path, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError(f"{path}: truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path):
    """Read a checkpoint back as an ordered name -> float64 array mapping."""
    entries = OrderedDict()
    try:
        fh = open(path, "rb")
    except OSError as err:
        raise DataError(f"{path}: cannot open checkpoint ({err})") from err
    with fh:
        if _read(fh, 4, path, "magic") != MAGIC:
            raise DataError(f"{path}: bad magic, not a checkpoint")
        version, count = struct.unpack("<II", _read(fh, 8, path, "header"))
        if version != VERSION:
            raise DataError(f"{path}: unsupported format version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read(fh, 2, path, "name length"))
            name = _read(fh, name_len, path, "name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read(fh, 1, path, "rank"))
            shape = tuple(
                struct.unpack("<Q", _read(fh, 8, path, "extent"))[0] for _ in range(rank)
            )
            n = int(np.prod(shape)) if shape else 1
            raw = _read(fh, 8 * n, path, f"values of {name}")
            entries[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return entries
