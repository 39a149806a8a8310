"""Open-loop workload injection and publish-to-all-subscribers latency.

Publishers update one key each at a fixed schedule; a callback registered for
creates/updates on those keys republishes every write to the benchmark
channel, and every subscriber records when each event arrives.  Sends that
fall behind schedule go out immediately but keep their intended send time,
so ``corrected_latency_ns`` is free of coordinated omission.

Everything runs on one host and timestamps come from ``time.monotonic_ns``
(CLOCK_MONOTONIC), which the server uses for ``publish_ts`` as well.
"""

from __future__ import annotations

import csv
import ctypes
import math
import os
import random
import socket
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

from . import kernels, wire
from .client import Client
from .errors import ConnectionLost, EmptyInput, EvStreamError, InvalidSpec, NotFound
from .protection import NATIVE, ProtectionProfile
from .store import OpKind
from .wire import FrameType

MIN_SIZE = 64
MAX_SIZE = 512
_NS = 1_000_000_000


@dataclass(frozen=True)
class WorkloadSpec:
    target_rate: float
    message_size_bytes: int = 64
    duration_s: float = 10.0
    publishers: int = 1
    subscribers: int = 1
    channel: str = "bench"
    profile: ProtectionProfile = NATIVE
    seed: int = 0
    allow_any_size: bool = False

    def __post_init__(self):
        if not self.target_rate > 0:
            raise InvalidSpec("target_rate must be > 0")
        if not self.duration_s > 0:
            raise InvalidSpec("duration_s must be > 0")
        if self.publishers < 1 or self.subscribers < 0:
            raise InvalidSpec("need at least one publisher and a non-negative subscriber count")
        if self.allow_any_size:
            if self.message_size_bytes < 0:
                raise InvalidSpec("message_size_bytes must be >= 0")
        elif not MIN_SIZE <= self.message_size_bytes <= MAX_SIZE:
            raise InvalidSpec(f"message_size_bytes must be in [{MIN_SIZE}, {MAX_SIZE}]")
        if not 1 <= len(self.channel.encode()) <= 100:
            raise InvalidSpec("channel name must be 1..100 bytes")

    @property
    def total_sends(self) -> int:
        # rounding guards against products like 5000 * 1.1 = 5500.000000000001
        return math.ceil(round(self.target_rate * self.duration_s, 6))

    def key(self, publisher: int) -> bytes:
        return f"{self.channel}:p{publisher}".encode()


class Send(NamedTuple):
    index: int
    offset_ns: int


def schedule(spec: WorkloadSpec) -> list[list[Send]]:
    """Intended send offsets ``i / rate``, dealt round-robin to publishers."""
    n = spec.total_sends
    per_pub: list[list[Send]] = [[] for _ in range(spec.publishers)]
    for i in range(n):
        per_pub[i % spec.publishers].append(Send(i, round(i * _NS / spec.target_rate)))
    return per_pub


def payloads(spec: WorkloadSpec) -> list[bytes]:
    """``total_sends`` incompressible payloads from a generator seeded by ``spec.seed``."""
    size = spec.message_size_bytes
    blob = random.Random(spec.seed).randbytes(size * spec.total_sends)
    return [blob[i * size:(i + 1) * size] for i in range(spec.total_sends)]


@dataclass
class LatencyRecord:
    seq: Optional[int]
    intended_send_ts: int
    actual_send_ts: Optional[int]
    publish_ts: Optional[int]
    receive_ts: list[int] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return self.publish_ts is not None and bool(self.receive_ts)

    @property
    def recv_max(self) -> Optional[int]:
        return max(self.receive_ts) if self.receive_ts else None

    @property
    def event_latency_ns(self) -> Optional[int]:
        # the event is delivered once the *last* subscriber has it
        if not self.complete:
            return None
        return max(self.receive_ts) - self.publish_ts

    @property
    def corrected_latency_ns(self) -> Optional[int]:
        if not self.receive_ts:
            return None
        return max(self.receive_ts) - self.intended_send_ts


@dataclass
class RunResult:
    spec: WorkloadSpec
    records: list[LatencyRecord]
    start_ns: int
    delivered: int
    achieved_rate: float
    send_errors: int = 0
    aborted: bool = False
    error: str = ""

    def latencies(self, corrected: bool = False) -> list[int]:
        attr = "corrected_latency_ns" if corrected else "event_latency_ns"
        return [v for v in (getattr(r, attr) for r in self.records if self._done(r)) if v is not None]

    def _done(self, r: LatencyRecord) -> bool:
        return len(r.receive_ts) == self.spec.subscribers

    def mean_latency_ns(self, corrected: bool = False) -> float:
        xs = self.latencies(corrected)
        if not xs:
            raise EmptyInput("no delivered events")
        return sum(xs) / len(xs)


# -- percentiles ------------------------------------------------------------


def nearest_rank(samples: Sequence[float], quantiles: Iterable[float]) -> list[float]:
    """Nearest-rank quantiles: the ``ceil(q * n)``-th smallest sample."""
    if not samples:
        raise EmptyInput("no samples")
    xs = sorted(samples)
    n = len(xs)
    out = []
    for q in quantiles:
        if not 0 <= q <= 1:
            raise ValueError(f"quantile {q} outside [0, 1]")
        rank = max(1, math.ceil(round(q * n, 9)))
        out.append(xs[rank - 1])
    return out


class Percentiles(NamedTuple):
    event: list[float]
    corrected: list[float]


def percentiles(records: Sequence[LatencyRecord], which: Iterable[float]) -> Percentiles:
    which = list(which)
    if not records:
        raise EmptyInput("no records")
    ev = [r.event_latency_ns for r in records if r.event_latency_ns is not None]
    co = [r.corrected_latency_ns for r in records if r.corrected_latency_ns is not None]
    return Percentiles(nearest_rank(ev, which), nearest_rank(co, which))


# -- CSV --------------------------------------------------------------------

CSV_HEADER = ["seq", "intended_send_ns", "actual_send_ns", "publish_ns", "recv_max_ns", "latency_ns", "corrected_latency_ns"]


def write_csv(result: RunResult, path) -> None:
    """One row per intended send; times relative to the run start, blanks for missing data."""
    t0 = result.start_ns

    def rel(v):
        return "" if v is None else v - t0

    def val(v):
        return "" if v is None else v

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in result.records:
            w.writerow([
                val(r.seq), rel(r.intended_send_ts), rel(r.actual_send_ts), rel(r.publish_ts),
                rel(r.recv_max), val(r.event_latency_ns), val(r.corrected_latency_ns),
            ])


def read_csv(path) -> list[dict[str, Optional[int]]]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if v != "" else None) for k, v in row.items()} for row in csv.DictReader(fh)]


# -- run --------------------------------------------------------------------

_libc = None


def _tight_timer_slack() -> None:
    """Cut this thread's timer slack to 1 ns so short sleeps land on time (Linux)."""
    global _libc
    if not sys.platform.startswith("linux"):
        return
    try:
        if _libc is None:
            _libc = ctypes.CDLL(None, use_errno=True)
        _libc.prctl(29, 1, 0, 0, 0)  # PR_SET_TIMERSLACK
    except (OSError, AttributeError):
        pass


def _connect(address) -> socket.socket:
    sock = socket.create_connection(address, timeout=10.0)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock


class _Publisher(threading.Thread):
    """Timed sender for one connection.

    Replies are drained without blocking between sends, so a reply never
    wakes a thread of its own; whatever is outstanding is collected at the end.
    """

    def __init__(self, address, frames: list[bytes], sends: list[Send], t0: int, stop_at: int):
        super().__init__(daemon=True, name="evstream-pub")
        self.sock = _connect(address)
        # a socket timeout would make recv(MSG_DONTWAIT) poll first
        self.sock.settimeout(None)
        self.frames = frames
        self.sends = sends
        self.t0 = t0
        self.stop_at = stop_at
        self.actual: list[Optional[int]] = [None] * len(sends)
        self.replies = 0
        self.errors = 0
        self.error: Optional[BaseException] = None
        self._decoder = wire.FrameDecoder()

    def _absorb(self, data: bytes) -> None:
        if not data:
            raise ConnectionLost("server closed publisher connection")
        for ftype, body in self._decoder.feed(data):
            self.replies += 1
            if body[0] != wire.STATUS_OK:
                self.errors += 1

    def _drain_nowait(self) -> None:
        while True:
            try:
                data = self.sock.recv(1 << 16, socket.MSG_DONTWAIT)
            except (BlockingIOError, InterruptedError):
                return
            self._absorb(data)

    def run(self):
        _tight_timer_slack()
        clock = time.monotonic_ns
        sleep = time.sleep
        sock = self.sock
        t0 = self.t0
        sent = 0
        try:
            for k, send in enumerate(self.sends):
                target = t0 + send.offset_ns
                now = clock()
                if now >= self.stop_at:
                    break
                if target > now:
                    self._drain_nowait()
                    now = clock()
                    if target > now:
                        sleep((target - now) / _NS)
                self.actual[k] = clock()
                sock.sendall(self.frames[k])
                sent += 1
            deadline = self.stop_at + _NS
            while self.replies < sent:
                remaining = (deadline - clock()) / _NS
                if remaining <= 0:
                    break
                sock.settimeout(remaining)
                try:
                    self._absorb(sock.recv(1 << 16))
                except socket.timeout:
                    break
        except (OSError, EvStreamError) as exc:
            self.error = exc


class _Subscriber(threading.Thread):
    def __init__(self, address, channel: bytes, expected: int, deadline_ns: int):
        super().__init__(daemon=True, name="evstream-sub")
        self.client = Client(address)
        self.client.subscribe(channel)
        self.channel = channel
        self.expected = expected
        self.deadline = deadline_ns
        # (seq, publish_ts, key, recv_ts)
        self.got: list[tuple[int, int, bytes, int]] = []
        self.error: Optional[BaseException] = None

    def run(self):
        sock = self.client.sock
        dec = self.client.decoder
        got = self.got
        decode = kernels.decode_event
        clock = time.monotonic_ns
        try:
            while len(got) < self.expected:
                remaining = (self.deadline - clock()) / _NS
                if remaining <= 0:
                    return
                sock.settimeout(remaining)
                try:
                    data = sock.recv(1 << 18)
                except socket.timeout:
                    return
                now = clock()
                if not data:
                    raise ConnectionLost("server closed subscriber connection")
                for ftype, body in dec.feed(data):
                    if ftype != FrameType.EVT:
                        status, req, _ = wire.parse_reply(body)
                        if status:
                            raise ConnectionLost(f"subscriber dropped by server (status {status})")
                        continue
                    channel, seq, ts, payload = decode(body)
                    got.append((seq, ts, payload[:payload.index(b"\x00")], now))
        except (OSError, EvStreamError, ValueError) as exc:
            self.error = exc


def _grace_ns(spec: WorkloadSpec) -> int:
    return int(min(1.0, max(0.25, 0.1 * spec.duration_s)) * _NS)


def run(spec: WorkloadSpec, address: tuple[str, int], lead_s: float = 0.05) -> RunResult:
    """Drive one open-loop run against a server and collect latency records.

    Raises ConnectionLost (with the partial ``RunResult`` as ``.partial``) if
    any connection fails mid-run.
    """
    per_pub = schedule(spec)
    data = payloads(spec)
    channel = spec.channel.encode()
    n = spec.total_sends

    with Client(address) as ctl:
        for j in range(spec.publishers):
            try:
                ctl.delete(spec.key(j))
            except NotFound:
                pass
        reg_id = ctl.register_callback(OpKind.writes(), channel + b":p*", channel)
        try:
            return _run(spec, address, per_pub, data, channel, n, lead_s)
        finally:
            ctl.unregister_callback(reg_id)


def _run(spec, address, per_pub, data, channel, n, lead_s) -> RunResult:
    frames = [
        [wire.encode_frame(FrameType.SET, wire.set_body(spec.key(j), data[s.index])) for s in sends]
        for j, sends in enumerate(per_pub)
    ]
    # the subscriber deadline is provisional until t0 is fixed below
    subs = [_Subscriber(address, channel, n, 0) for _ in range(spec.subscribers)]
    t0 = time.monotonic_ns() + int(lead_s * _NS)
    stop_at = t0 + int(spec.duration_s * _NS) + _grace_ns(spec)
    pubs = [_Publisher(address, frames[j], per_pub[j], t0, stop_at) for j in range(spec.publishers)]
    for s in subs:
        s.deadline = stop_at
    threads = [*subs, *pubs]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for p in pubs:
        p.sock.close()
    for s in subs:
        s.client.close()

    records = _assemble(spec, per_pub, pubs, subs)
    delivered = sum(1 for r in records if len(r.receive_ts) == spec.subscribers and r.complete)
    if spec.subscribers == 0:
        delivered = sum(1 for r in records if r.actual_send_ts is not None)
    result = RunResult(
        spec=spec,
        records=records,
        start_ns=t0,
        delivered=delivered,
        achieved_rate=delivered / spec.duration_s,
        send_errors=sum(p.errors for p in pubs),
    )
    failures = [t.error for t in threads if t.error is not None]
    if failures:
        result.aborted = True
        result.error = "; ".join(str(f) for f in failures)
        exc = ConnectionLost(result.error)
        exc.partial = result
        raise exc
    return result


def _assemble(spec, per_pub, pubs, subs) -> list[LatencyRecord]:
    records: list[Optional[LatencyRecord]] = [None] * spec.total_sends
    by_key: dict[bytes, list[LatencyRecord]] = {}
    for j, (sends, pub) in enumerate(zip(per_pub, pubs)):
        mine = []
        for k, send in enumerate(sends):
            rec = LatencyRecord(None, pub.t0 + send.offset_ns, pub.actual[k], None)
            records[send.index] = rec
            mine.append(rec)
        by_key[spec.key(j)] = mine
    # per key, the k-th event a subscriber sees is the publisher's k-th write
    for s in subs:
        cursor = {key: 0 for key in by_key}
        for seq, ts, key, recv in s.got:
            recs = by_key.get(key)
            if recs is None:
                continue
            k = cursor[key]
            cursor[key] = k + 1
            if k >= len(recs):
                continue
            rec = recs[k]
            rec.seq = seq
            rec.publish_ts = ts
            rec.receive_ts.append(recv)
    return records


# -- closed-loop op latency ---------------------------------------------------


def prefill(address, total_bytes: int, value_size: int = 4096, prefix: str = "fill") -> int:
    """Write filler entries until the store holds at least ``total_bytes``; returns entries written."""
    value = bytes(value_size)
    written = 0
    with Client(address) as c:
        i = 0
        while written < total_bytes:
            key = f"{prefix}:{i}".encode()
            c.set(key, value)
            written += len(key) + len(value)
            i += 1
    return i


def op_latencies(address, count: int, size: int, seed: int = 0, key: str = "op:probe", warmup: int = 200) -> list[int]:
    """Round-trip times of ``count`` sequential SETs of ``size``-byte values."""
    rng = random.Random(seed)
    value = rng.randbytes(size)
    out = []
    with Client(address) as c:
        k = key.encode()
        for _ in range(warmup):
            c.set(k, value)
        clock = time.monotonic_ns
        for _ in range(count):
            t = clock()
            c.set(k, value)
            out.append(clock() - t)
    return out


# -- server subprocess --------------------------------------------------------


def profile_args(profile: ProtectionProfile) -> list[str]:
    return [
        "--profile", profile.mode.value,
        "--per-call-ns", str(profile.per_call_ns),
        "--per-byte-ns", repr(float(profile.per_byte_ns)),
        "--epc-bytes", str(profile.epc_capacity_bytes),
        "--page-penalty-ns", str(profile.page_fault_penalty_ns),
    ]


class ServerProcess:
    """A server in a child process, so benchmark clients do not share its GIL."""

    def __init__(self, profile: ProtectionProfile = NATIVE, listen: str = "127.0.0.1:0", extra: Sequence[str] = ()):
        self.cmd = [sys.executable, "-m", "evstream", "serve", "--listen", listen, *profile_args(profile), *extra]
        self.proc: Optional[subprocess.Popen] = None
        self.address: Optional[tuple[str, int]] = None

    def start(self, timeout: float = 15.0) -> "ServerProcess":
        env = dict(os.environ)
        env.setdefault("PYTHONUNBUFFERED", "1")
        self.proc = subprocess.Popen(self.cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True, env=env)
        deadline = time.monotonic() + timeout
        line = ""
        while time.monotonic() < deadline:
            line = self.proc.stdout.readline()
            if not line:
                break
            if line.startswith("listening on "):
                host, _, port = line.split()[-1].rpartition(":")
                self.address = (host, int(port))
                return self
        err = self.proc.stderr.read() if self.proc.poll() is not None else ""
        self.stop()
        raise EvStreamError(f"server failed to start: {line.strip()} {err.strip()}")

    def stop(self, timeout: float = 10.0) -> int:
        if self.proc is None:
            return 0
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        for fh in (self.proc.stdout, self.proc.stderr):
            if fh:
                fh.close()
        return self.proc.returncode

    def __enter__(self) -> "ServerProcess":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
