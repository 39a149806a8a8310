"""Blocking client for the binary protocol.

One connection can both issue requests and receive events.  EVT frames that
arrive while a reply is awaited are parked and handed out by ``next_event``.
"""

from __future__ import annotations

import socket
import time
from collections import deque
from typing import Optional

from . import wire
from .errors import ConnectionLost, Overflow, from_status
from .modules import as_mask
from .names import as_bytes
from .store import OpKind
from .wire import EventFrameBody, FrameType


class Client:
    def __init__(self, address: tuple[str, int], timeout: Optional[float] = 10.0):
        self.timeout = timeout
        self.sock = socket.create_connection(address, timeout=timeout)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.decoder = wire.FrameDecoder()
        self._frames: deque[tuple[int, bytes]] = deque()
        self.events: deque[tuple[EventFrameBody, int]] = deque()
        self.overflowed = False

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass

    def __enter__(self) -> "Client":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- transport ----------------------------------------------------------

    def _read(self, timeout: Optional[float]) -> bool:
        self.sock.settimeout(timeout)
        try:
            data = self.sock.recv(1 << 16)
        except socket.timeout:
            return False
        if not data:
            raise ConnectionLost("server closed the connection")
        now = time.monotonic_ns()
        for ftype, body in self.decoder.feed(data):
            if ftype == FrameType.EVT:
                self.events.append((wire.decode_event(body), now))
            else:
                self._frames.append((ftype, body))
        return True

    def request(self, ftype: int, body: bytes = b"") -> bytes:
        self.sock.sendall(wire.encode_frame(ftype, body))
        while True:
            while self._frames:
                rtype, rbody = self._frames.popleft()
                status, req, result = wire.parse_reply(rbody)
                if req == FrameType.EVT and status == Overflow.status:
                    self.overflowed = True
                    raise Overflow(result.decode(errors="replace"))
                if status:
                    raise from_status(status, result.decode(errors="replace"))
                return result
            if not self._read(self.timeout):
                raise TimeoutError(f"no reply to frame type 0x{ftype:02x} within {self.timeout}s")

    # -- commands -----------------------------------------------------------

    def set(self, key, value) -> tuple[int, OpKind]:
        version, op = wire.parse_set_result(self.request(FrameType.SET, wire.set_body(as_bytes(key), as_bytes(value))))
        return version, OpKind(op)

    def get(self, key) -> bytes:
        return self.request(FrameType.GET, as_bytes(key))

    def delete(self, key) -> OpKind:
        return OpKind(self.request(FrameType.DEL, as_bytes(key))[0])

    def subscribe(self, pattern) -> dict[bytes, int]:
        return wire.parse_sub_result(self.request(FrameType.SUB, as_bytes(pattern)))

    def unsubscribe(self, pattern) -> None:
        self.request(FrameType.UNSUB, as_bytes(pattern))

    def publish(self, channel, payload) -> tuple[int, int]:
        return wire.parse_pub_result(self.request(FrameType.PUB, wire.pub_body(as_bytes(channel), as_bytes(payload))))

    def register_callback(self, op_mask, key_filter, target_channel) -> int:
        body = wire.regcb_body(as_mask(op_mask), as_bytes(key_filter), as_bytes(target_channel))
        return wire.parse_regcb_result(self.request(FrameType.REGCB, body))

    def unregister_callback(self, reg_id: int) -> None:
        self.request(FrameType.UNREGCB, wire.unregcb_body(reg_id))

    # -- events -------------------------------------------------------------

    def next_event(self, timeout: Optional[float] = 5.0) -> Optional[EventFrameBody]:
        """Return the next event, or None if none arrives within ``timeout``."""
        deadline = None if timeout is None else time.monotonic() + timeout
        while not self.events:
            if self._frames:
                self._check_notice()
            remaining = None if deadline is None else deadline - time.monotonic()
            if remaining is not None and remaining <= 0:
                return None
            if not self._read(remaining):
                return None
        return self.events.popleft()[0]

    def _check_notice(self) -> None:
        for ftype, body in list(self._frames):
            status, req, result = wire.parse_reply(body)
            if req == FrameType.EVT and status == Overflow.status:
                self.overflowed = True
                raise Overflow(result.decode(errors="replace"))

    def collect(self, n: int, timeout: float = 10.0) -> list[EventFrameBody]:
        out = []
        deadline = time.monotonic() + timeout
        while len(out) < n:
            ev = self.next_event(max(0.0, deadline - time.monotonic()))
            if ev is None:
                break
            out.append(ev)
        return out


def ops(*names: str) -> OpKind:
    mask = OpKind(0)
    for name in names:
        mask |= OpKind[name.upper()]
    return mask
