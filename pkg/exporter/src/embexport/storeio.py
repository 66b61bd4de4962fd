"""Writer for the RAREMB01 multi-channel embedding file format.

Layout (little-endian): the magic bytes ``RAREMB01``, a uint32 record
count, then per record a uint16-length-prefixed UTF-8 id, a uint16-length-
prefixed UTF-8 channel name, a uint32 dimension, and that many float32
values. Records are sorted by (id, channel) so identical content always
produces identical bytes.
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ExportError

MAGIC = b"RAREMB01"

#: Channel names the format reserves; the exporter writes a subset.
CHANNELS = frozenset({
    "sentence", "e1", "e2", "relation", "pure_relation",
    "ft_sentence", "ft_e1", "ft_e2",
})

Record = tuple[str, str, np.ndarray]


def _checked(records: Sequence[Record]) -> list[Record]:
    dims: dict[str, int] = {}
    seen: set[tuple[str, str]] = set()
    out: list[Record] = []
    for iid, channel, vec in records:
        if channel not in CHANNELS:
            raise ExportError(
                f"unknown channel {channel!r}; valid: {', '.join(sorted(CHANNELS))}"
            )
        key = (iid, channel)
        if key in seen:
            raise ExportError(f"duplicate record id={iid!r} channel={channel!r}")
        seen.add(key)
        vec = np.asarray(vec, dtype=np.float32)
        if vec.ndim != 1 or vec.size == 0:
            raise ExportError(f"record id={iid!r} channel={channel!r} must "
                              f"hold a non-empty 1-D vector")
        if not np.all(np.isfinite(vec)):
            raise ExportError(f"record id={iid!r} channel={channel!r} "
                              f"contains NaN or infinity")
        dim = dims.setdefault(channel, vec.shape[0])
        if vec.shape[0] != dim:
            raise ExportError(
                f"channel {channel!r} holds {dim}-d vectors; got "
                f"{vec.shape[0]}-d for id={iid!r}"
            )
        out.append((iid, channel, vec))
    out.sort(key=lambda record: (record[0], record[1]))
    return out


def channel_dims(records: Sequence[Record]) -> dict[str, int]:
    return {channel: vec.shape[0] for _, channel, vec in _checked(records)}


def write_records(records: Sequence[Record], path: str | Path) -> str:
    """Write records atomically; returns the sha256 hex digest of the file."""
    path = Path(path)
    ordered = _checked(records)
    if not ordered:
        raise ExportError("refusing to write an empty embedding file")
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(ordered)))
            for iid, channel, vec in ordered:
                iid_b = iid.encode("utf-8")
                ch_b = channel.encode("utf-8")
                if len(iid_b) > 0xFFFF or len(ch_b) > 0xFFFF:
                    raise ExportError(f"id or channel too long for record: {iid!r}")
                fh.write(struct.pack("<H", len(iid_b)))
                fh.write(iid_b)
                fh.write(struct.pack("<H", len(ch_b)))
                fh.write(ch_b)
                fh.write(struct.pack("<I", vec.shape[0]))
                fh.write(vec.astype("<f4").tobytes())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return sha256_file(path)


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
