"""Embedded append-only record store.

One log file per collection at `<data_dir>/<name>.log`. All integers are
little-endian. Layout:

    header   magic "SBLG" | version u16 = 1
    record   total_len u32   bytes after this field
             crc u32         CRC-32 (IEEE 802.3 polynomial) of all
                             following bytes in the record
             seq u64         strictly increasing per collection
             op u8           1 = Put, 2 = Delete
             key_len u16
             key bytes       UTF-8, at most 1024 bytes
             payload bytes   total_len - 4 - 8 - 1 - 2 - key_len

The live state of a collection is an in-memory index (key -> newest Put)
rebuilt on open by replaying the log. Recovery accepts the longest valid
prefix of the file and truncates anything after it: a torn or corrupted
record also invalidates every record behind it, because later writes may
depend on lost ones. Deletes are tombstones; `compact` rewrites a log with
only the live records, using an atomic rename as the commit point.

Durability: every mutation is flushed (and by default fsynced) before the
call returns. Single writer per collection, enforced internally; reads may
run concurrently and see the latest committed index state.
"""

from __future__ import annotations

import contextlib
import os
import re
import struct
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path

from .errors import StoreError, StoreFormatError, ValidationError

MAGIC = b"SBLG"
VERSION = 1
HEADER = MAGIC + struct.pack("<H", VERSION)

OP_PUT = 1
OP_DELETE = 2

MAX_KEY_BYTES = 1024
# Fixed bytes of a record after total_len, besides key and payload.
_RECORD_OVERHEAD = 4 + 8 + 1 + 2
_LEN_STRUCT = struct.Struct("<I")
_BODY_STRUCT = struct.Struct("<IQBH")  # crc, seq, op, key_len

COLLECTION_NAME_RE = re.compile(r"^[a-z0-9_]{1,64}$")


@dataclass(frozen=True)
class _IndexEntry:
    seq: int
    payload_offset: int
    payload_len: int


@dataclass(frozen=True)
class _WalkedRecord:
    offset: int
    seq: int
    op: int
    key: str
    payload: bytes
    payload_offset: int
    end_offset: int


@dataclass(frozen=True)
class CompactionStats:
    records_before: int
    records_after: int
    bytes_reclaimed: int


@dataclass(frozen=True)
class VerifyReport:
    valid_records: int
    first_corrupt_offset: int | None


class _Collection:
    def __init__(self, name: str, path: Path):
        self.name = name
        self.path = path
        self.lock = threading.RLock()
        self.file = None  # unbuffered binary handle, swapped on compaction
        self.index: dict[str, _IndexEntry] = {}
        self.next_seq = 1
        self.end_offset = len(HEADER)
        self.records_total = 0


def _encode_record(seq: int, op: int, key: bytes, payload: bytes) -> bytes:
    body = _BODY_STRUCT.pack(0, seq, op, len(key)) + key + payload
    crc = zlib.crc32(body[4:]) & 0xFFFFFFFF
    body = _BODY_STRUCT.pack(crc, seq, op, len(key)) + key + payload
    return _LEN_STRUCT.pack(len(body)) + body


def _walk_records(
    data: bytes, start: int, max_record_bytes: int
) -> tuple[list[_WalkedRecord], int, int | None]:
    """Parse the valid record prefix of `data` beginning at `start`.

    Returns (records, end_of_valid_prefix, first_invalid_offset_or_None).
    Validity requires framing to fit, the CRC to match, a known op, a key
    within limits that decodes as UTF-8, strictly increasing seq, and an
    empty payload on deletes.
    """
    records: list[_WalkedRecord] = []
    pos = start
    prev_seq = 0
    end = len(data)
    while pos < end:
        if end - pos < _LEN_STRUCT.size:
            return records, pos, pos
        (total_len,) = _LEN_STRUCT.unpack_from(data, pos)
        if total_len < _RECORD_OVERHEAD or total_len > max_record_bytes:
            return records, pos, pos
        body_start = pos + _LEN_STRUCT.size
        if end - body_start < total_len:
            return records, pos, pos
        crc, seq, op, key_len = _BODY_STRUCT.unpack_from(data, body_start)
        payload_len = total_len - _RECORD_OVERHEAD - key_len
        if key_len > MAX_KEY_BYTES or payload_len < 0:
            return records, pos, pos
        body = data[body_start + 4 : body_start + total_len]
        if zlib.crc32(body) & 0xFFFFFFFF != crc:
            return records, pos, pos
        if op not in (OP_PUT, OP_DELETE):
            return records, pos, pos
        if seq <= prev_seq:
            return records, pos, pos
        key_start = body_start + _BODY_STRUCT.size
        key_bytes = data[key_start : key_start + key_len]
        try:
            key = key_bytes.decode("utf-8")
        except UnicodeDecodeError:
            return records, pos, pos
        payload_offset = key_start + key_len
        payload = data[payload_offset : payload_offset + payload_len]
        if op == OP_DELETE and payload_len != 0:
            return records, pos, pos
        prev_seq = seq
        rec_end = body_start + total_len
        records.append(
            _WalkedRecord(pos, seq, op, key, payload, payload_offset, rec_end)
        )
        pos = rec_end
    return records, pos, None


def verify_log(path: str | os.PathLike, max_record_bytes: int = 1 << 20) -> VerifyReport:
    """Full CRC pass over one log file, read-only.

    Usable offline (CLI) without opening the store, so it never triggers
    recovery truncation. Corruption is reported, not raised.
    """
    data = Path(path).read_bytes()
    if data[: len(HEADER)] != HEADER:
        raise StoreFormatError(f"bad log header in {Path(path).name}")
    records, _, bad = _walk_records(data, len(HEADER), max_record_bytes)
    return VerifyReport(valid_records=len(records), first_corrupt_offset=bad)


class RecordStore:
    """Handle over one data directory of collection logs."""

    def __init__(
        self,
        data_dir: str | os.PathLike,
        *,
        fsync: bool = True,
        max_record_bytes: int = 1 << 20,
    ):
        self.data_dir = Path(data_dir)
        if not self.data_dir.is_dir():
            raise StoreError(f"data directory does not exist: {self.data_dir}")
        self._fsync = fsync
        self._max_record_bytes = max_record_bytes
        self._lock = threading.Lock()  # guards the collection map
        self._collections: dict[str, _Collection] = {}
        self._closed = False
        try:
            for stale in self.data_dir.glob("*.log.compacting"):
                stale.unlink()
            for path in sorted(self.data_dir.glob("*.log")):
                name = path.name[: -len(".log")]
                if not COLLECTION_NAME_RE.match(name):
                    raise StoreFormatError(f"invalid collection file name: {path.name}")
                self._collections[name] = self._open_collection(name, path)
        except OSError as exc:
            raise StoreError(f"cannot open store in {self.data_dir}: {exc}") from exc

    # -- lifecycle ---------------------------------------------------------

    def _open_collection(self, name: str, path: Path) -> _Collection:
        coll = _Collection(name, path)
        data = path.read_bytes()
        if len(data) < len(HEADER):
            if data == HEADER[: len(data)]:
                # Torn header write: reset to an empty collection.
                path.write_bytes(HEADER)
                data = HEADER
            else:
                raise StoreFormatError(f"bad log header in {path.name}")
        elif data[: len(HEADER)] != HEADER:
            raise StoreFormatError(f"bad log header in {path.name}")

        records, valid_end, bad = _walk_records(
            data, len(HEADER), self._max_record_bytes
        )
        for rec in records:
            if rec.op == OP_PUT:
                coll.index[rec.key] = _IndexEntry(
                    rec.seq, rec.payload_offset, len(rec.payload)
                )
            else:
                coll.index.pop(rec.key, None)
        coll.records_total = len(records)
        coll.next_seq = (records[-1].seq + 1) if records else 1
        coll.end_offset = valid_end

        coll.file = open(path, "r+b", buffering=0)
        if bad is not None and valid_end < len(data):
            coll.file.truncate(valid_end)
            os.fsync(coll.file.fileno())
        return coll

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
            for coll in self._collections.values():
                with coll.lock:
                    coll.file.close()

    def __enter__(self) -> "RecordStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- helpers -----------------------------------------------------------

    def collections(self) -> list[str]:
        with self._lock:
            return sorted(self._collections)

    def _get_collection(self, name: str, create: bool) -> _Collection | None:
        with self._lock:
            if self._closed:
                raise StoreError("store is closed")
            coll = self._collections.get(name)
            if coll is None and create:
                if not COLLECTION_NAME_RE.match(name):
                    raise ValidationError(f"invalid collection name: {name!r}")
                path = self.data_dir / f"{name}.log"
                path.write_bytes(HEADER)
                self._sync_dir()
                coll = _Collection(name, path)
                coll.file = open(path, "r+b", buffering=0)
                self._collections[name] = coll
            return coll

    def _sync_dir(self) -> None:
        if not self._fsync:
            return
        fd = os.open(self.data_dir, os.O_RDONLY)
        try:
            os.fsync(fd)
        finally:
            os.close(fd)

    @staticmethod
    def _key_bytes(key: str) -> bytes:
        if not isinstance(key, str):
            raise ValidationError("keys are strings")
        try:
            raw = key.encode("utf-8")
        except UnicodeEncodeError as exc:
            raise ValidationError(f"key is not valid UTF-8: {exc}") from exc
        if len(raw) > MAX_KEY_BYTES:
            raise ValidationError(f"key exceeds {MAX_KEY_BYTES} bytes")
        return raw

    def _append(self, coll: _Collection, op: int, key: str, payload: bytes) -> int:
        raw_key = self._key_bytes(key)
        if _RECORD_OVERHEAD + len(raw_key) + len(payload) > self._max_record_bytes:
            raise ValidationError("record exceeds the maximum record size")
        seq = coll.next_seq
        record = _encode_record(seq, op, raw_key, payload)
        # pwrite at the tracked end so a previously failed partial append is
        # overwritten rather than extended.
        fd = coll.file.fileno()
        written = os.pwrite(fd, record, coll.end_offset)
        if written != len(record):
            raise StoreError("short write to log file")
        if self._fsync:
            os.fsync(fd)
        payload_offset = coll.end_offset + _LEN_STRUCT.size + _BODY_STRUCT.size + len(raw_key)
        if op == OP_PUT:
            coll.index[key] = _IndexEntry(seq, payload_offset, len(payload))
        else:
            coll.index.pop(key, None)
        coll.end_offset += len(record)
        coll.next_seq = seq + 1
        coll.records_total += 1
        return seq

    # -- operations --------------------------------------------------------

    @contextlib.contextmanager
    def write_turn(self, collection: str):
        """Hold the collection's writer turn across a read-modify-write."""
        coll = self._get_collection(collection, create=True)
        with coll.lock:
            yield

    def put(self, collection: str, key: str, payload: bytes) -> int:
        if not isinstance(payload, (bytes, bytearray)):
            raise ValidationError("payload must be bytes")
        coll = self._get_collection(collection, create=True)
        with coll.lock:
            return self._append(coll, OP_PUT, key, bytes(payload))

    def delete(self, collection: str, key: str) -> int:
        coll = self._get_collection(collection, create=True)
        with coll.lock:
            return self._append(coll, OP_DELETE, key, b"")

    def get(self, collection: str, key: str) -> bytes | None:
        coll = self._get_collection(collection, create=False)
        if coll is None:
            return None
        with coll.lock:
            entry = coll.index.get(key)
            if entry is None:
                return None
            file = coll.file
            data = os.pread(file.fileno(), entry.payload_len, entry.payload_offset)
        if len(data) != entry.payload_len:
            raise StoreError(f"short read from {coll.path.name}")
        return data

    def scan(
        self,
        collection: str,
        key_prefix: str = "",
        limit: int = 100,
        after_key: str | None = None,
    ) -> list[tuple[str, bytes]]:
        """Live (key, payload) pairs in ascending key order.

        Starts strictly after `after_key` and returns at most `limit` items,
        so repeated calls passing the last key of the previous page walk the
        whole prefix without duplicates.
        """
        if limit < 1:
            raise ValidationError("limit must be >= 1")
        coll = self._get_collection(collection, create=False)
        if coll is None:
            return []
        out: list[tuple[str, bytes]] = []
        with coll.lock:
            keys = sorted(
                k
                for k in coll.index
                if k.startswith(key_prefix) and (after_key is None or k > after_key)
            )[:limit]
            fd = coll.file.fileno()
            for k in keys:
                entry = coll.index[k]
                out.append((k, os.pread(fd, entry.payload_len, entry.payload_offset)))
        return out

    def iter_prefix(self, collection: str, key_prefix: str = ""):
        """Yield every live (key, payload) under a prefix, in key order."""
        after = None
        while True:
            page = self.scan(collection, key_prefix, limit=500, after_key=after)
            if not page:
                return
            yield from page
            after = page[-1][0]

    def keys(self, collection: str, key_prefix: str = "") -> list[str]:
        """All live keys under a prefix, sorted. Cheaper than scan: no reads."""
        coll = self._get_collection(collection, create=False)
        if coll is None:
            return []
        with coll.lock:
            return sorted(k for k in coll.index if k.startswith(key_prefix))

    def max_key(self, collection: str, key_prefix: str = "") -> str | None:
        coll = self._get_collection(collection, create=False)
        if coll is None:
            return None
        with coll.lock:
            best = None
            for k in coll.index:
                if k.startswith(key_prefix) and (best is None or k > best):
                    best = k
            return best

    def compact(self, collection: str) -> CompactionStats:
        """Rewrite the log keeping only live records, atomically.

        The replacement holds the live Puts in ascending key order,
        re-sequenced from 1. Readers observe identical (get, scan) results
        before and after; a crash mid-compaction leaves the old log intact.
        """
        coll = self._get_collection(collection, create=False)
        if coll is None:
            raise ValidationError(f"unknown collection: {collection}")
        with coll.lock:
            old_size = coll.end_offset
            records_before = coll.records_total
            fd = coll.file.fileno()
            live = []
            for key in sorted(coll.index):
                entry = coll.index[key]
                live.append(
                    (key, os.pread(fd, entry.payload_len, entry.payload_offset))
                )
            tmp_path = coll.path.with_name(coll.path.name + ".compacting")
            with open(tmp_path, "wb") as tmp:
                tmp.write(HEADER)
                offset = len(HEADER)
                new_index: dict[str, _IndexEntry] = {}
                for seq, (key, payload) in enumerate(live, start=1):
                    raw_key = key.encode("utf-8")
                    record = _encode_record(seq, OP_PUT, raw_key, payload)
                    tmp.write(record)
                    new_index[key] = _IndexEntry(
                        seq,
                        offset + _LEN_STRUCT.size + _BODY_STRUCT.size + len(raw_key),
                        len(payload),
                    )
                    offset += len(record)
                tmp.flush()
                os.fsync(tmp.fileno())
            os.replace(tmp_path, coll.path)  # commit point
            self._sync_dir()
            # Swap in the new handle; the old object is dropped, not closed,
            # so a concurrent reader holding it can finish its pread.
            coll.file = open(coll.path, "r+b", buffering=0)
            coll.index = new_index
            coll.next_seq = len(live) + 1
            coll.end_offset = offset
            coll.records_total = len(live)
            return CompactionStats(
                records_before=records_before,
                records_after=len(live),
                bytes_reclaimed=old_size - offset,
            )

    def verify(self, collection: str) -> VerifyReport:
        """Read-only full CRC pass over the collection's log file."""
        coll = self._get_collection(collection, create=False)
        if coll is None:
            raise ValidationError(f"unknown collection: {collection}")
        with coll.lock:
            return verify_log(coll.path, self._max_record_bytes)
