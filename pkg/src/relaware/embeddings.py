"""Dense vector storage keyed by (instance id, channel), plus cosine.

Vectors are float32 for storage; all similarity arithmetic accumulates in
float64. Two on-disk formats round-trip bit-exactly: a little-endian binary
format opening with the magic bytes ``RAREMB01``, and a JSONL form with
records ``{"id": ..., "channel": ..., "vec": [...]}``.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import StoreError

MAGIC = b"RAREMB01"

#: Closed set of channel names. "Pure relation" vectors are entity-marker
#: concatenations and therefore twice the encoder width; "ft_*" channels are
#: projection-head outputs over the corresponding base channels.
CHANNELS = frozenset({
    "sentence", "e1", "e2", "relation", "pure_relation",
    "ft_sentence", "ft_e1", "ft_e2",
})

#: Channel key prefix for relation-label embeddings ("label:<code>").
LABEL_KEY_PREFIX = "label:"


def label_key(code: str) -> str:
    return LABEL_KEY_PREFIX + code


def as_vector(values: Iterable[float] | np.ndarray) -> np.ndarray:
    """Coerce to a read-only 1-D float32 array, rejecting NaN/inf and empties."""
    vec = np.asarray(values, dtype=np.float32)
    if vec.ndim != 1 or vec.size == 0:
        raise StoreError("vector must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(vec)):
        raise StoreError("vector contains NaN or infinity")
    vec = np.ascontiguousarray(vec)
    vec.flags.writeable = False
    return vec


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity with float64 accumulation, clamped to [-1, 1].

    Zero-norm operands and dimension mismatches are hard errors. The
    accumulation order does not depend on operand order, so
    cosine(u, v) == cosine(v, u) exactly.
    """
    u = np.asarray(u)
    v = np.asarray(v)
    if u.ndim != 1 or v.ndim != 1 or u.shape != v.shape:
        raise StoreError(f"dimension mismatch: {u.shape} vs {v.shape}")
    u64 = u.astype(np.float64)
    v64 = v.astype(np.float64)
    nu = math.sqrt(float(np.dot(u64, u64)))
    nv = math.sqrt(float(np.dot(v64, v64)))
    if nu == 0.0 or nv == 0.0:
        raise StoreError("cosine undefined for zero-norm vector")
    value = float(np.dot(u64, v64)) / (nu * nv)
    return max(-1.0, min(1.0, value))


class EmbeddingStore:
    """Immutable map from (id, channel) to a float32 vector.

    Every vector within one channel has the same dimensionality; channel
    names come from the closed CHANNELS set.
    """

    def __init__(self, entries: Mapping[tuple[str, str], np.ndarray] | None = None):
        self._entries: dict[tuple[str, str], np.ndarray] = {}
        self._dims: dict[str, int] = {}
        for (iid, channel), vec in (entries or {}).items():
            self._add(iid, channel, vec)

    def _add(self, iid: str, channel: str, vec: np.ndarray) -> None:
        if channel not in CHANNELS:
            raise StoreError(
                f"unknown channel {channel!r}; valid: {', '.join(sorted(CHANNELS))}"
            )
        key = (iid, channel)
        if key in self._entries:
            raise StoreError(f"duplicate entry for id={iid!r} channel={channel!r}")
        vec = as_vector(vec)
        dim = self._dims.setdefault(channel, vec.shape[0])
        if vec.shape[0] != dim:
            raise StoreError(
                f"channel {channel!r} holds {dim}-d vectors; got {vec.shape[0]}-d "
                f"for id={iid!r}"
            )
        self._entries[key] = vec

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._entries

    @property
    def channel_dims(self) -> dict[str, int]:
        return dict(self._dims)

    def get(self, iid: str, channel: str) -> np.ndarray:
        try:
            return self._entries[(iid, channel)]
        except KeyError:
            raise StoreError(
                f"no embedding for id={iid!r} channel={channel!r}"
            ) from None

    def ids(self, channel: str) -> list[str]:
        """Ids present in a channel, ascending."""
        return sorted(iid for (iid, ch) in self._entries if ch == channel)

    def items(self) -> Iterable[tuple[tuple[str, str], np.ndarray]]:
        return self._entries.items()

    def extended(self, new_entries: Mapping[tuple[str, str], np.ndarray]) -> "EmbeddingStore":
        """A new store with extra entries; existing keys must not collide."""
        merged = dict(self._entries)
        store = EmbeddingStore(merged)
        for (iid, channel), vec in new_entries.items():
            store._add(iid, channel, vec)
        return store


def _canonical_records(store: EmbeddingStore) -> list[tuple[str, str, np.ndarray]]:
    return [
        (iid, channel, vec)
        for (iid, channel), vec in sorted(store.items(), key=lambda kv: kv[0])
    ]


def write_store(store: EmbeddingStore, path: str | Path, fmt: str = "binary") -> None:
    """Serialize a store; fmt is "binary" (magic RAREMB01) or "jsonl".

    Records are sorted by (id, channel) so re-serialization is byte-stable.
    """
    path = Path(path)
    records = _canonical_records(store)
    if fmt == "binary":
        with path.open("wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(records)))
            for iid, channel, vec in records:
                iid_b = iid.encode("utf-8")
                ch_b = channel.encode("utf-8")
                if len(iid_b) > 0xFFFF or len(ch_b) > 0xFFFF:
                    raise StoreError(f"id or channel too long for record: {iid!r}")
                fh.write(struct.pack("<H", len(iid_b)))
                fh.write(iid_b)
                fh.write(struct.pack("<H", len(ch_b)))
                fh.write(ch_b)
                fh.write(struct.pack("<I", vec.shape[0]))
                fh.write(vec.astype("<f4").tobytes())
    elif fmt == "jsonl":
        with path.open("w", encoding="utf-8") as fh:
            for iid, channel, vec in records:
                obj = {"id": iid, "channel": channel,
                       "vec": [float(x) for x in vec]}
                fh.write(json.dumps(obj, ensure_ascii=False, separators=(",", ":")))
                fh.write("\n")
    else:
        raise StoreError(f"unknown store format {fmt!r}; use 'binary' or 'jsonl'")


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise StoreError(f"truncated store file while reading {what}")
    return data


def _load_binary(path: Path) -> EmbeddingStore:
    entries: dict[tuple[str, str], np.ndarray] = {}
    with path.open("rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise StoreError(
                f"{path}: bad magic {magic!r}; expected {MAGIC.decode('ascii')}"
            )
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "record count"))
        for i in range(count):
            what = f"record {i}"
            (id_len,) = struct.unpack("<H", _read_exact(fh, 2, what))
            iid = _read_exact(fh, id_len, what).decode("utf-8")
            (ch_len,) = struct.unpack("<H", _read_exact(fh, 2, what))
            channel = _read_exact(fh, ch_len, what).decode("utf-8")
            (dim,) = struct.unpack("<I", _read_exact(fh, 4, what))
            raw = _read_exact(fh, 4 * dim, what)
            vec = np.frombuffer(raw, dtype="<f4").astype(np.float32)
            key = (iid, channel)
            if key in entries:
                raise StoreError(f"{path}: duplicate entry id={iid!r} channel={channel!r}")
            entries[key] = vec
        trailing = fh.read(1)
        if trailing:
            raise StoreError(f"{path}: trailing data after {count} records")
    return EmbeddingStore(entries)


def _load_jsonl(path: Path) -> EmbeddingStore:
    entries: dict[tuple[str, str], np.ndarray] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise StoreError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict) or set(obj) != {"id", "channel", "vec"}:
                raise StoreError(
                    f"{path}: line {lineno}: record must have exactly "
                    "keys id, channel, vec"
                )
            key = (obj["id"], obj["channel"])
            if key in entries:
                raise StoreError(
                    f"{path}: line {lineno}: duplicate entry id={obj['id']!r} "
                    f"channel={obj['channel']!r}"
                )
            entries[key] = np.asarray(obj["vec"], dtype=np.float32)
    return EmbeddingStore(entries)


def load_store(path: str | Path) -> EmbeddingStore:
    """Load a store, sniffing the format from the leading bytes."""
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        return _load_binary(path)
    if head[:1] in (b"{", b""):
        return _load_jsonl(path)
    raise StoreError(
        f"{path}: unrecognized store format (leading bytes {head!r}); expected "
        f"{MAGIC.decode('ascii')} binary or JSONL"
    )


class ChannelView:
    """Float64 view over one channel with cached norms.

    Pairwise similarities computed here match cosine() bit for bit: the same
    dot products feed the same quotient and clamp. Caching the float64 copies
    and norms only removes repeated conversion work.
    """

    def __init__(self, store: EmbeddingStore, channel: str):
        if channel not in CHANNELS:
            raise StoreError(f"unknown channel {channel!r}")
        self._store = store
        self._channel = channel
        self._vecs: dict[str, np.ndarray] = {}
        self._norms: dict[str, float] = {}

    def _entry(self, iid: str) -> tuple[np.ndarray, float]:
        if iid not in self._vecs:
            vec = self._store.get(iid, self._channel).astype(np.float64)
            self._vecs[iid] = vec
            self._norms[iid] = math.sqrt(float(np.dot(vec, vec)))
        return self._vecs[iid], self._norms[iid]

    def cos(self, a: str, b: str) -> float:
        ua, na = self._entry(a)
        vb, nb = self._entry(b)
        if na == 0.0 or nb == 0.0:
            zero = a if na == 0.0 else b
            raise StoreError(
                f"cosine undefined for zero-norm vector (id={zero!r}, "
                f"channel={self._channel!r})"
            )
        value = float(np.dot(ua, vb)) / (na * nb)
        return max(-1.0, min(1.0, value))
