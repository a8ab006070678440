"""Binary tensor-record serialization for checkpoints.

Little-endian layout:

    header:  magic  4 bytes = b"CENC"
             version u32    = 1
             count   u32    number of records
    record:  name_len u32
             name     UTF-8 bytes
             rank     u32   (0 for scalars)
             dims     u32 * rank
             payload  float32 * prod(dims)

Records are written in insertion order, so a round trip preserves the
model's deterministic parameter ordering.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"CENC"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed, truncated, or incompatible checkpoint file."""


def save_tensor_records(path, records):
    """Write an ordered mapping of name -> ndarray as float32 records."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(records)))
        for name, arr in records.items():
            data = np.asarray(arr, dtype=np.float32)  # tobytes() emits C order
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(data.tobytes())


def load_tensor_records(path):
    """Read records back as {name: float32 ndarray}, preserving order."""
    with open(path, "rb") as fh:
        blob = fh.read()

    def take(n, what):
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointError(f"truncated checkpoint: unexpected end of file in {what}")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    pos = 0
    if take(4, "magic") != MAGIC:
        raise CheckpointError(f"bad magic in {path}: not a checkpoint file")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    records = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4, "record header"))
        name = take(name_len, "record name").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, "record rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "record dims")) if rank else ()
        n_values = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = take(4 * n_values, f"payload of {name}")
        records[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes after last record")
    return records
