"""Writer for the engine's binary embedding interchange format.

Layout: magic `EMB1`, format version u16 LE, D u32 LE, N u32 LE,
u16-length-prefixed UTF-8 encoder name, activated flag u8, then N records
of [u16-length-prefixed UTF-8 id][D x IEEE-754 binary32 LE].
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

EMB_MAGIC = b"EMB1"
EMB_VERSION = 1


def write_interchange(
    path: str | Path,
    ids: list[str],
    values: np.ndarray,
    encoder_name: str,
    activated: bool,
) -> None:
    values = np.asarray(values, dtype=np.float32)
    if values.ndim != 2 or values.shape[0] != len(ids):
        raise ValueError("values must be N x D with one id per row")
    if not np.all(np.isfinite(values)):
        raise ValueError("refusing to write non-finite embedding values")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate ids in embedding batch")
    name = encoder_name.encode("utf-8")
    parts = [
        EMB_MAGIC,
        struct.pack("<H", EMB_VERSION),
        struct.pack("<I", values.shape[1]),
        struct.pack("<I", values.shape[0]),
        struct.pack("<H", len(name)),
        name,
        struct.pack("<B", 1 if activated else 0),
    ]
    for i, rid in enumerate(ids):
        encoded = rid.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(values[i].tobytes())
    Path(path).write_bytes(b"".join(parts))
