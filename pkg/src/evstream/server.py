"""TCP endpoint: maps request frames onto the store, module host and broker.

All commands run on the event loop thread, which is the node's single
serialized command sequence.  For each request the server executes the
command, spins for the protection overhead, then flushes any events the
command produced and finally writes the reply.
"""

from __future__ import annotations

import asyncio
import logging
import threading
from typing import Optional

from . import wire
from .errors import BadRequest, BindFailure, EvStreamError, Overflow, ProtocolError, UnknownSubscription
from .modules import ModuleHost
from .protection import NATIVE, ProtectionGate, ProtectionProfile
from .pubsub import DEFAULT_MAX_QUEUE, Broker, Subscriber
from .store import OpKind, Store
from .wire import FrameType

log = logging.getLogger(__name__)

_PAYLOAD_TYPES = (FrameType.SET, FrameType.PUB)


class Node:
    """The processing node: store, callback host, broker and protection gate."""

    def __init__(self, profile: ProtectionProfile = NATIVE, max_queue: int = DEFAULT_MAX_QUEUE, workers: int = 1):
        self.broker = Broker(max_queue=max_queue)
        self.host = ModuleHost(self.broker, workers=workers)
        self.store = Store(self.host.dispatch)
        self.gate = ProtectionGate(profile)

    @property
    def profile(self) -> ProtectionProfile:
        return self.gate.profile

    def close(self) -> None:
        self.host.close()


class Connection(asyncio.Protocol):
    def __init__(self, server: "Server"):
        self.server = server
        self.node = server.node
        self.decoder = wire.FrameDecoder()
        self.transport: Optional[asyncio.Transport] = None
        self.subscriber: Optional[Subscriber] = None
        self.paused = False
        self.closed = False

    # -- asyncio callbacks --------------------------------------------------

    def connection_made(self, transport):
        self.transport = transport
        self.server._conns.add(self)

    def connection_lost(self, exc):
        self.closed = True
        self.server._conns.discard(self)
        if self.subscriber is not None:
            self.server._by_sub.pop(self.subscriber.id, None)
            self.node.broker.disconnect(self.subscriber)
            self.subscriber.queue.clear()

    def pause_writing(self):
        self.paused = True

    def resume_writing(self):
        self.paused = False
        self.flush()

    def data_received(self, data):
        try:
            frames = self.decoder.feed(data)
        except ProtocolError as exc:
            log.info("closing connection: %s", exc)
            self.transport.abort()
            return
        for ftype, body in frames:
            if self.closed:
                return
            self.handle(ftype, body)
        if self.decoder._pending_error is not None:
            log.info("closing connection: %s", self.decoder._pending_error)
            self.transport.abort()

    # -- request handling ---------------------------------------------------

    def handle(self, ftype: int, body: bytes) -> None:
        node = self.node
        try:
            result = self.execute(ftype, body)
            status = wire.STATUS_OK
        except EvStreamError as exc:
            result = str(exc).encode()
            status = exc.status
        request_bytes = self._payload_len(ftype, body)
        node.gate.apply(request_bytes, node.store.footprint)
        self.server.flush_dirty()
        if not self.closed:
            self.transport.write(wire.reply(status, ftype, result))

    @staticmethod
    def _payload_len(ftype: int, body: bytes) -> int:
        if ftype in _PAYLOAD_TYPES and len(body) >= 2:
            return max(0, len(body) - 2 - ((body[0] << 8) | body[1]))
        return 0

    def execute(self, ftype: int, body: bytes) -> bytes:
        node = self.node
        if ftype == FrameType.SET:
            key, value = wire.parse_set(body)
            version, op = node.store.set(key, value)
            return wire.set_result(version, op)
        if ftype == FrameType.GET:
            return node.store.get(body)
        if ftype == FrameType.DEL:
            return bytes((int(node.store.delete(body)),))
        if ftype == FrameType.PUB:
            channel, payload = wire.parse_pub(body)
            return wire.pub_result(*node.broker.publish(channel, payload))
        if ftype == FrameType.SUB:
            return wire.sub_result(node.broker.subscribe(self._subscriber(), body))
        if ftype == FrameType.UNSUB:
            if self.subscriber is None:
                raise UnknownSubscription(body.decode(errors="replace"))
            node.broker.unsubscribe(self.subscriber, body)
            return b""
        if ftype == FrameType.REGCB:
            mask, key_filter, channel = wire.parse_regcb(body)
            return wire.regcb_result(node.host.register_callback(OpKind(mask & 0x0F), key_filter, channel))
        if ftype == FrameType.UNREGCB:
            node.host.unregister_callback(wire.parse_unregcb(body))
            return b""
        raise BadRequest(f"frame type 0x{ftype:02x} is not a request")

    def _subscriber(self) -> Subscriber:
        if self.subscriber is None:
            self.subscriber = self.node.broker.connect(
                on_ready=self.server.mark_dirty, on_overflow=self.server.overflowed
            )
            self.server._by_sub[self.subscriber.id] = self
        return self.subscriber

    # -- event delivery -----------------------------------------------------

    def flush(self) -> None:
        sub = self.subscriber
        if sub is None or self.paused or self.closed or not sub.queue:
            return
        encode = wire.encode_event
        q = sub.queue
        chunks = []
        while q:
            e = q.popleft()
            chunks.append(encode(e.channel, e.seq, e.publish_ts, e.payload))
        self.transport.write(b"".join(chunks))


class Server:
    def __init__(self, node: Node, host: str = "127.0.0.1", port: int = 0):
        self.node = node
        self.host = host
        self.port = port
        self._server: Optional[asyncio.AbstractServer] = None
        self._conns: set[Connection] = set()
        self._by_sub: dict[int, Connection] = {}
        self._dirty: list[Subscriber] = []

    @property
    def address(self) -> tuple[str, int]:
        return self.host, self.port

    async def start(self) -> "Server":
        loop = asyncio.get_running_loop()
        try:
            self._server = await loop.create_server(
                lambda: Connection(self), self.host, self.port, reuse_address=False
            )
        except OSError as exc:
            raise BindFailure(f"cannot bind {self.host}:{self.port}: {exc}") from exc
        sock = self._server.sockets[0]
        self.port = sock.getsockname()[1]
        self.node.gate.locked = True
        return self

    def mark_dirty(self, sub: Subscriber) -> None:
        self._dirty.append(sub)

    def flush_dirty(self) -> None:
        if not self._dirty:
            return
        dirty, self._dirty = self._dirty, []
        by_sub = self._by_sub
        for sub in dirty:
            conn = by_sub.get(sub.id)
            if conn is not None:
                conn.flush()

    def overflowed(self, sub: Subscriber) -> None:
        conn = self._by_sub.pop(sub.id, None)
        if conn is None or conn.closed:
            return
        log.warning("subscriber %d overflowed its queue; disconnecting", sub.id)
        conn.transport.write(wire.reply(Overflow.status, FrameType.EVT, b"subscriber queue overflow"))
        conn.closed = True
        conn.transport.close()

    async def close(self) -> None:
        """Stop accepting, let buffered output drain, then drop connections."""
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None
        for conn in list(self._conns):
            if conn.transport is not None:
                conn.transport.close()
        for _ in range(100):
            if not self._conns:
                break
            await asyncio.sleep(0.01)
        self.node.gate.locked = False


async def serve(host: str, port: int, node: Node) -> Server:
    return await Server(node, host, port).start()


class ServerThread:
    """Run a server on a private event loop in a background thread.

    >>> with ServerThread(Node()) as srv:   # doctest: +SKIP
    ...     client = Client(srv.address)
    """

    def __init__(self, node: Optional[Node] = None, host: str = "127.0.0.1", port: int = 0):
        self.node = node or Node()
        self.server = Server(self.node, host, port)
        self.loop = asyncio.new_event_loop()
        self._thread = threading.Thread(target=self._run, name="evstream-server", daemon=True)
        self._ready = threading.Event()
        self._error: Optional[BaseException] = None

    @property
    def address(self) -> tuple[str, int]:
        return self.server.address

    def _run(self) -> None:
        asyncio.set_event_loop(self.loop)
        try:
            self.loop.run_until_complete(self.server.start())
        except BaseException as exc:  # reported to the starting thread
            self._error = exc
            self._ready.set()
            return
        self._ready.set()
        self.loop.run_forever()
        self.loop.run_until_complete(self.server.close())
        self.loop.close()

    def start(self) -> "ServerThread":
        self._thread.start()
        self._ready.wait()
        if self._error is not None:
            raise self._error
        return self

    def stop(self) -> None:
        if self._thread.is_alive():
            self.loop.call_soon_threadsafe(self.loop.stop)
            self._thread.join()
        self.node.close()

    def call(self, fn, *args):
        """Run ``fn(*args)`` on the server loop and wait for its result."""
        fut = asyncio.run_coroutine_threadsafe(_acall(fn, *args), self.loop)
        return fut.result()

    def __enter__(self) -> "ServerThread":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


async def _acall(fn, *args):
    return fn(*args)


def parse_address(text: str, default_port: int = 7469) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        return text or "127.0.0.1", default_port
    return host or "127.0.0.1", int(port)


__all__ = ["Node", "Server", "ServerThread", "serve", "parse_address"]
