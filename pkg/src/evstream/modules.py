"""Callback registrations that turn store commands into channel events.

A registration is a declarative rule: an op mask, a key glob and a target
channel.  ``dispatch`` publishes one event per matching rule, in
registration-id order, with payload ``key + b"\\x00" + value``.

Rule evaluation can be spread over a thread pool (``workers > 1``); matching
is order-preserving so emission order stays ascending by id either way.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

from .errors import EmptyOpMask, UnknownId
from .names import as_bytes, check_channel, check_glob, glob_match
from .pubsub import Broker, Event
from .store import OpKind

SEPARATOR = b"\x00"
# below this many rules a pool round-trip costs more than it saves
PARALLEL_THRESHOLD = 64


@dataclass(frozen=True)
class CallbackRegistration:
    id: int
    op_mask: OpKind
    key_filter: bytes
    target_channel: bytes

    def matches(self, op: OpKind, key: bytes) -> bool:
        return bool(op & self.op_mask) and glob_match(self.key_filter, key)


def make_payload(key: bytes, value: bytes) -> bytes:
    return key + SEPARATOR + value


def split_payload(payload: bytes) -> tuple[bytes, bytes]:
    key, _, value = payload.partition(SEPARATOR)
    return key, value


def as_mask(op_mask) -> OpKind:
    if isinstance(op_mask, OpKind):
        return op_mask
    mask = OpKind(0)
    for op in op_mask:
        mask |= OpKind(op)
    return mask


class ModuleHost:
    def __init__(self, broker: Broker, workers: int = 1):
        self.broker = broker
        self.workers = workers
        self._regs: list[CallbackRegistration] = []
        self._next_id = 1
        self._lock = threading.RLock()
        self._pool: Optional[ThreadPoolExecutor] = (
            ThreadPoolExecutor(max_workers=workers, thread_name_prefix="evstream-cb") if workers > 1 else None
        )

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    @property
    def registrations(self) -> list[CallbackRegistration]:
        with self._lock:
            return list(self._regs)

    def register_callback(self, op_mask, key_filter, target_channel) -> int:
        mask = as_mask(op_mask)
        key_filter = as_bytes(key_filter)
        target_channel = as_bytes(target_channel)
        if not mask:
            raise EmptyOpMask("op_mask must contain at least one op")
        check_glob(key_filter)
        check_channel(target_channel)
        with self._lock:
            reg = CallbackRegistration(self._next_id, mask, key_filter, target_channel)
            self._next_id += 1
            self._regs.append(reg)
            return reg.id

    def unregister_callback(self, reg_id: int) -> None:
        with self._lock:
            for i, reg in enumerate(self._regs):
                if reg.id == reg_id:
                    del self._regs[i]
                    return
        raise UnknownId(str(reg_id))

    def _matching(self, op: OpKind, key: bytes) -> list[CallbackRegistration]:
        regs = self._regs
        if self._pool is None or len(regs) < PARALLEL_THRESHOLD:
            return [r for r in regs if r.matches(op, key)]
        n = -(-len(regs) // self.workers)
        chunks = [regs[i:i + n] for i in range(0, len(regs), n)]
        hits = self._pool.map(lambda chunk: [r for r in chunk if r.matches(op, key)], chunks)
        return [r for part in hits for r in part]

    def dispatch(self, op: OpKind, key: bytes, value: bytes) -> list[Event]:
        with self._lock:
            matched = self._matching(op, key)
            if not matched:
                return []
            payload = make_payload(key, value)
            broker = self.broker
            with broker.lock:
                return [broker._publish_locked(reg.target_channel, payload)[0] for reg in matched]
