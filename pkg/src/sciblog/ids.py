"""Numeric id allocation over zero-padded store keys.

Entity keys embed ids as fixed-width decimal segments (`user/0000000042`)
so lexicographic scan order equals id order. The allocator seeds itself
from the highest id already present and hands out the next one under a
lock; all persistence still flows through the record store.
"""

from __future__ import annotations

import threading

ID_WIDTH = 10


def format_id(n: int) -> str:
    return f"{n:0{ID_WIDTH}d}"


class IdAllocator:
    def __init__(self, store, collection: str, key_prefix: str = ""):
        best = 0
        for key in store.keys(collection, key_prefix):
            segment = key.rsplit("/", 1)[-1]
            if segment.isdigit():
                best = max(best, int(segment))
        self._next = best + 1
        self._lock = threading.Lock()

    def allocate(self) -> int:
        with self._lock:
            n = self._next
            self._next += 1
            return n
