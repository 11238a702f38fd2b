"""Canonical payload encoding for persisted entities.

Every entity is serialized as a flat sequence of tagged fields, each
`u16 field-id | u32 length | value bytes`, all integers little-endian.
Writers emit fields in their documented order; readers index by id and
ignore unknown ids, so records written by newer code stay readable.
"""

from __future__ import annotations

import struct
from datetime import date, datetime, timedelta, timezone

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

_FIELD_HEADER = struct.Struct("<HI")


def encode_fields(fields: list[tuple[int, bytes]]) -> bytes:
    out = bytearray()
    for fid, value in fields:
        out += _FIELD_HEADER.pack(fid, len(value))
        out += value
    return bytes(out)


def decode_fields(data: bytes) -> dict[int, bytes]:
    """Decode to {field_id: value}. Later duplicates win; unknown ids kept."""
    fields: dict[int, bytes] = {}
    pos = 0
    end = len(data)
    while pos < end:
        if end - pos < _FIELD_HEADER.size:
            raise ValueError("truncated field header")
        fid, length = _FIELD_HEADER.unpack_from(data, pos)
        pos += _FIELD_HEADER.size
        if end - pos < length:
            raise ValueError("truncated field value")
        fields[fid] = data[pos : pos + length]
        pos += length
    return fields


# Value codecs. Integers are i64 little-endian; timestamps are microseconds
# since the Unix epoch (UTC); dates are ISO text.

def enc_int(n: int) -> bytes:
    return struct.pack("<q", n)


def dec_int(b: bytes) -> int:
    return struct.unpack("<q", b)[0]


def enc_bool(v: bool) -> bytes:
    return b"\x01" if v else b"\x00"


def dec_bool(b: bytes) -> bool:
    return b == b"\x01"


def enc_str(s: str) -> bytes:
    return s.encode("utf-8")


def dec_str(b: bytes) -> str:
    return b.decode("utf-8")


def ts_us(dt: datetime) -> int:
    """Exact integer microseconds since the epoch (no float rounding)."""
    if dt.tzinfo is None:
        raise ValueError("timestamps must be timezone-aware")
    return (dt - _EPOCH) // timedelta(microseconds=1)


def enc_ts(dt: datetime) -> bytes:
    return enc_int(ts_us(dt))


def dec_ts(b: bytes) -> datetime:
    return _EPOCH + timedelta(microseconds=dec_int(b))


def enc_date(d: date) -> bytes:
    return d.isoformat().encode("ascii")


def dec_date(b: bytes) -> date:
    return date.fromisoformat(b.decode("ascii"))
