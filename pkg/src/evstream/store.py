"""In-memory key-value store that classifies every command as a CRUD op.

Each successful command calls the ``dispatch`` hook exactly once with
``(op, key, value)``; failed commands never dispatch.  All commands run under
one lock, which gives a total order over mutations no matter how many threads
submit them.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import NotFound
from .names import MAX_VALUE, as_bytes, check_key, check_value


class OpKind(enum.IntFlag):
    CREATE = 1
    READ = 2
    UPDATE = 4
    DELETE = 8

    @classmethod
    def writes(cls) -> "OpKind":
        return cls.CREATE | cls.UPDATE

    @classmethod
    def all(cls) -> "OpKind":
        return cls.CREATE | cls.READ | cls.UPDATE | cls.DELETE


@dataclass
class Entry:
    key: bytes
    value: bytes
    version: int = 1


Dispatch = Callable[[OpKind, bytes, bytes], object]


def _no_dispatch(op, key, value):
    return None


class Store:
    """Single-sequence key-value store.

    ``footprint`` tracks the bytes held in keys and values; the protection
    model reads it as the resident protected memory.
    """

    def __init__(self, dispatch: Optional[Dispatch] = None, max_value: int = MAX_VALUE):
        self._entries: dict[bytes, Entry] = {}
        self._dispatch = dispatch or _no_dispatch
        self._lock = threading.RLock()
        self.max_value = max_value
        self.footprint = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key) -> bool:
        return as_bytes(key) in self._entries

    @property
    def lock(self) -> threading.RLock:
        return self._lock

    def set(self, key, value) -> tuple[int, OpKind]:
        key = as_bytes(key)
        value = as_bytes(value)
        check_key(key)
        check_value(value, self.max_value)
        with self._lock:
            entry = self._entries.get(key)
            if entry is None:
                entry = self._entries[key] = Entry(key, value)
                self.footprint += len(key) + len(value)
                op = OpKind.CREATE
            else:
                self.footprint += len(value) - len(entry.value)
                entry.value = value
                entry.version += 1
                op = OpKind.UPDATE
            self._dispatch(op, key, value)
            return entry.version, op

    def get(self, key) -> bytes:
        key = as_bytes(key)
        with self._lock:
            entry = self._entries.get(key)
            if entry is None:
                raise NotFound(key.decode(errors="replace"))
            self._dispatch(OpKind.READ, key, entry.value)
            return entry.value

    def delete(self, key) -> OpKind:
        key = as_bytes(key)
        with self._lock:
            entry = self._entries.pop(key, None)
            if entry is None:
                raise NotFound(key.decode(errors="replace"))
            self.footprint -= len(key) + len(entry.value)
            # deletion events carry no value
            self._dispatch(OpKind.DELETE, key, b"")
            return OpKind.DELETE

    def entry(self, key) -> Entry:
        """Return a copy of the stored entry without dispatching a Read."""
        key = as_bytes(key)
        with self._lock:
            entry = self._entries.get(key)
            if entry is None:
                raise NotFound(key.decode(errors="replace"))
            return Entry(entry.key, entry.value, entry.version)

    def snapshot(self) -> dict[bytes, bytes]:
        with self._lock:
            return {k: e.value for k, e in self._entries.items()}
