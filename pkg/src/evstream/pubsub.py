"""Channels, pattern subscriptions and fan-out delivery.

Every channel owns a gapless sequence counter starting at 1.  ``publish``
assigns the sequence number and the monotonic publish timestamp under one
lock, then appends the event to the queue of each distinct subscriber that
has at least one matching pattern.  Queues are bounded; a subscriber that
overflows is disconnected.
"""

from __future__ import annotations

import itertools
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import UnknownSubscription
from .names import MAX_VALUE, as_bytes, check_channel, check_glob, check_value, glob_match, is_literal

DEFAULT_MAX_QUEUE = 65536


@dataclass(frozen=True)
class Event:
    channel: bytes
    seq: int
    publish_ts: int
    payload: bytes


class Subscriber:
    """One connection's view of the broker.

    ``on_ready`` fires whenever the queue goes from empty to non-empty and
    ``on_overflow`` once if the subscriber is dropped for falling behind.
    Both run inside ``publish`` and must not block.
    """

    def __init__(
        self,
        sid: int,
        max_queue: int = DEFAULT_MAX_QUEUE,
        on_ready: Optional[Callable[["Subscriber"], None]] = None,
        on_overflow: Optional[Callable[["Subscriber"], None]] = None,
    ):
        self.id = sid
        self.max_queue = max_queue
        self.queue: deque[Event] = deque()
        self.patterns: dict[bytes, dict[bytes, int]] = {}
        self.connected = True
        self.overflowed = False
        self.on_ready = on_ready
        self.on_overflow = on_overflow

    def __repr__(self) -> str:
        return f"Subscriber(id={self.id}, patterns={list(self.patterns)})"

    def drain(self) -> list[Event]:
        out = []
        q = self.queue
        while q:
            out.append(q.popleft())
        return out

    def matches(self, channel: bytes) -> bool:
        return any(glob_match(p, channel) for p in self.patterns)


class Broker:
    def __init__(self, max_queue: int = DEFAULT_MAX_QUEUE, max_payload: int = MAX_VALUE + 1024):
        self.max_queue = max_queue
        self.max_payload = max_payload
        self._lock = threading.Lock()
        self._ids = itertools.count(1)
        self._subscribers: dict[int, Subscriber] = {}
        self._next_seq: dict[bytes, int] = {}
        # channel -> subscribers with a matching pattern; dropped on any change
        self._route_cache: dict[bytes, tuple[Subscriber, ...]] = {}

    @property
    def lock(self) -> threading.Lock:
        return self._lock

    def connect(self, on_ready=None, on_overflow=None, max_queue: Optional[int] = None) -> Subscriber:
        sub = Subscriber(
            next(self._ids),
            self.max_queue if max_queue is None else max_queue,
            on_ready=on_ready,
            on_overflow=on_overflow,
        )
        with self._lock:
            self._subscribers[sub.id] = sub
        return sub

    def disconnect(self, sub: Subscriber) -> None:
        with self._lock:
            self._drop(sub)

    def _drop(self, sub: Subscriber) -> None:
        sub.connected = False
        sub.patterns.clear()
        self._subscribers.pop(sub.id, None)
        self._route_cache.clear()

    def subscribe(self, sub: Subscriber, pattern) -> dict[bytes, int]:
        """Add ``pattern`` for ``sub`` and return the start sequence per
        currently known matching channel; unseen channels start at 1."""
        pattern = as_bytes(pattern)
        check_glob(pattern)
        with self._lock:
            starts = {
                ch: nxt for ch, nxt in self._next_seq.items() if glob_match(pattern, ch)
            }
            if is_literal(pattern) and pattern not in starts:
                starts[pattern] = 1
            sub.patterns[pattern] = starts
            if sub.connected:
                self._subscribers[sub.id] = sub
            self._route_cache.clear()
            return dict(starts)

    def unsubscribe(self, sub: Subscriber, pattern) -> None:
        pattern = as_bytes(pattern)
        with self._lock:
            if pattern not in sub.patterns:
                raise UnknownSubscription(pattern.decode(errors="replace"))
            del sub.patterns[pattern]
            self._route_cache.clear()

    def _routes(self, channel: bytes) -> tuple[Subscriber, ...]:
        routes = self._route_cache.get(channel)
        if routes is None:
            routes = tuple(s for s in self._subscribers.values() if s.patterns and s.matches(channel))
            self._route_cache[channel] = routes
        return routes

    def publish(self, channel, payload) -> tuple[int, int]:
        """Return ``(seq, delivered_count)``."""
        channel = as_bytes(channel)
        payload = as_bytes(payload)
        check_channel(channel)
        check_value(payload, self.max_payload)
        with self._lock:
            event, delivered = self._publish_locked(channel, payload)
        return event.seq, delivered

    def _publish_locked(self, channel: bytes, payload: bytes) -> tuple[Event, int]:
        seq = self._next_seq.get(channel, 1)
        self._next_seq[channel] = seq + 1
        event = Event(channel, seq, time.monotonic_ns(), payload)
        delivered = 0
        overflowed = None
        for sub in self._routes(channel):
            q = sub.queue
            if len(q) >= sub.max_queue:
                if overflowed is None:
                    overflowed = []
                overflowed.append(sub)
                continue
            q.append(event)
            delivered += 1
            if len(q) == 1 and sub.on_ready is not None:
                sub.on_ready(sub)
        if overflowed:
            for sub in overflowed:
                sub.overflowed = True
                sub.queue.clear()
                self._drop(sub)
                if sub.on_overflow is not None:
                    sub.on_overflow(sub)
        return event, delivered

    def next_seq(self, channel) -> int:
        return self._next_seq.get(as_bytes(channel), 1)

    def subscriber_count(self) -> int:
        return len(self._subscribers)
