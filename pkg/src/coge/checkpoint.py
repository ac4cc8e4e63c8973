"""Binary parameter checkpoint.

Layout: magic "COGECKPT", version u32 LE, record count u32 LE; per record a
u32 name length, the UTF-8 name, u32 rank, u32 extents, then the payload as
32-bit little-endian floats.  The reader rejects unknown versions and names
the offending record on any inconsistency.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import CheckpointError

MAGIC = b"COGECKPT"
VERSION = 1


def save_checkpoint(path, records: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(records)))
        for name, array in records.items():
            data = np.asarray(array, dtype="<f4")  # keep 0-d ranks intact
            if not data.flags.c_contiguous:
                data = data.copy(order="C")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", data.ndim))
            for extent in data.shape:
                f.write(struct.pack("<I", extent))
            f.write(data.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    def take(f, n, what):
        chunk = f.read(n)
        if len(chunk) != n:
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        return chunk

    records: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        if take(f, len(MAGIC), "magic") != MAGIC:
            raise CheckpointError("bad magic bytes; not a checkpoint file")
        version, count = struct.unpack("<II", take(f, 8, "header"))
        if version != VERSION:
            raise CheckpointError(f"unknown checkpoint version {version}")
        for i in range(count):
            (name_len,) = struct.unpack("<I", take(f, 4, f"record {i} name length"))
            try:
                name = take(f, name_len, f"record {i} name").decode("utf-8")
            except UnicodeDecodeError as err:
                raise CheckpointError(f"record {i}: name is not UTF-8") from err
            (rank,) = struct.unpack("<I", take(f, 4, f"record {name!r} rank"))
            if rank > 8:
                raise CheckpointError(f"record {name!r}: implausible rank {rank}")
            shape = tuple(
                struct.unpack("<I", take(f, 4, f"record {name!r} extent"))[0]
                for _ in range(rank)
            )
            n_values = int(np.prod(shape)) if shape else 1
            payload = take(f, 4 * n_values, f"record {name!r} payload")
            records[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
        trailing = f.read(1)
        if trailing:
            raise CheckpointError("trailing bytes after the last record")
    return records
