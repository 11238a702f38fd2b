"""Opaque cursors for list routes.

A cursor encodes the sort-key tuple of the last item on the previous
page; the next page is everything strictly after it in list order. Keys
are built so that tuple comparison matches display order (descending
components are negated), which makes resumption a plain `>` filter and
the union of all pages a duplicate-free enumeration of the list.
"""

from __future__ import annotations

import base64
import json

from ..errors import ValidationError

CURSOR_PARAM = "after"


def encode_cursor(key: tuple) -> str:
    raw = json.dumps(list(key), separators=(",", ":")).encode("utf-8")
    return base64.urlsafe_b64encode(raw).decode("ascii").rstrip("=")


def decode_cursor(text: str) -> tuple:
    try:
        padded = text + "=" * (-len(text) % 4)
        raw = base64.urlsafe_b64decode(padded.encode("ascii"))
        key = json.loads(raw.decode("utf-8"))
    except Exception as exc:
        raise ValidationError("malformed page cursor") from exc
    if not isinstance(key, list):
        raise ValidationError("malformed page cursor")
    return tuple(key)


def after_cursor(items: list, key_of, cursor: tuple | None) -> list:
    """Items strictly after the cursor position, preserving order."""
    if cursor is None:
        return items
    out = []
    for item in items:
        try:
            if tuple(key_of(item)) > cursor:
                out.append(item)
        except TypeError:
            # Incomparable cursor (wrong shape for this route): start over.
            raise ValidationError("malformed page cursor") from None
    return out
