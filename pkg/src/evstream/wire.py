"""Length-prefixed binary framing.

Every frame is::

    0x45 0x56 | version 0x01 | frame type | body length (u32 BE) | body

Request and reply bodies (all integers big-endian)::

    SET      u16 key_len | key | value
    GET/DEL  key
    SUB/UNSUB pattern
    PUB      u16 channel_len | channel | payload
    REGCB    u8 op_mask | u16 filter_len | filter | channel
    UNREGCB  u32 id
    EVT      u16 channel_len | channel | u64 seq | u64 publish_ts_ns | payload
    REPLY    u8 status | u8 request_type | result

REPLY results on success: SET ``u64 version | u8 op``; GET the value; DEL
``u8 op``; SUB ``u16 n`` then ``n`` times ``u16 len | channel | u64 start_seq``;
PUB ``u64 seq | u32 delivered``; REGCB ``u32 id``; UNSUB/UNREGCB empty.  On
failure the result is a UTF-8 message.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import NamedTuple, Union

from . import kernels
from .errors import BadMagic, BadRequest, BodyTooLarge, UnknownFrameType, UnsupportedVersion
from .names import MAX_VALUE

MAGIC = b"\x45\x56"
VERSION = 0x01
HEADER_LEN = 8
MAX_BODY = MAX_VALUE + 1024

_header = struct.Struct(">2sBBI")
_u16 = struct.Struct(">H")
_u32 = struct.Struct(">I")
_reply_head = struct.Struct(">BB")
_set_result = struct.Struct(">QB")
_pub_result = struct.Struct(">QI")
_start = struct.Struct(">Q")


class FrameType(enum.IntEnum):
    SET = 0x01
    GET = 0x02
    DEL = 0x03
    SUB = 0x10
    UNSUB = 0x11
    PUB = 0x12
    EVT = 0x13
    REGCB = 0x20
    UNREGCB = 0x21
    REPLY = 0x7F


STATUS_OK = 0x00
_KNOWN = frozenset(int(t) for t in FrameType)


class NeedMore(NamedTuple):
    """Returned by ``decode_frame`` when the buffer holds a partial frame."""

    needed: int


class Frame(NamedTuple):
    frame_type: int
    body: bytes


def encode_frame(frame_type: int, body: bytes = b"") -> bytes:
    if frame_type not in _KNOWN:
        raise UnknownFrameType(f"frame type 0x{frame_type:02x}")
    if len(body) > MAX_BODY:
        raise BodyTooLarge(f"body is {len(body)} bytes, limit {MAX_BODY}")
    return _header.pack(MAGIC, VERSION, frame_type, len(body)) + body


def _raise_for(err: int, buf, pos: int) -> None:
    if err == kernels.ERR_BAD_MAGIC:
        raise BadMagic(f"bad magic {bytes(buf[pos:pos + 2]).hex()}")
    if err == kernels.ERR_VERSION:
        raise UnsupportedVersion(f"protocol version {buf[pos + 2]}")
    if err == kernels.ERR_FRAME_TYPE:
        raise UnknownFrameType(f"frame type 0x{buf[pos + 3]:02x}")
    if err == kernels.ERR_TOO_LARGE:
        raise BodyTooLarge("declared body length exceeds limit")


def decode_frame(buf) -> Union[tuple[Frame, int], NeedMore]:
    """Decode the first frame in ``buf``.

    Returns ``(Frame, consumed)`` or ``NeedMore(n)``.  Never looks beyond the
    first frame's declared end.
    """
    n = len(buf)
    if n == 0:
        return NeedMore(HEADER_LEN)
    head = bytes(buf[:HEADER_LEN])
    _, _, _, err = kernels.split_frames(head, MAX_BODY)
    if err:
        _raise_for(err, head, 0)
    if n < HEADER_LEN:
        return NeedMore(HEADER_LEN - n)
    (_, _, _, body_len) = _header.unpack_from(head, 0)
    total = HEADER_LEN + body_len
    if n < total:
        return NeedMore(total - n)
    return Frame(buf[3], bytes(buf[HEADER_LEN:total])), total


class FrameDecoder:
    """Incremental decoder: feed arbitrary chunks, get whole frames back.

    A protocol error is raised only after every frame preceding the bad one
    has been returned by an earlier ``feed``; the decoder is unusable after.
    """

    def __init__(self, max_body: int = MAX_BODY):
        self._buf = bytearray()
        self.max_body = max_body
        self.needed = HEADER_LEN
        self._pending_error = None

    def feed(self, data: bytes) -> list[tuple[int, bytes]]:
        if self._pending_error is not None:
            raise self._pending_error
        buf = self._buf
        if buf:
            buf += data
            src = buf
        else:
            src = data
        frames, consumed, need, err = kernels.split_frames(src, self.max_body)
        if src is buf:
            del buf[:consumed]
        elif consumed < len(data):
            buf += data[consumed:]
        if err:
            try:
                _raise_for(err, self._buf, 0)
            except Exception as exc:
                self._pending_error = exc
                if not frames:
                    raise
        self.needed = need if need else (0 if self._buf else HEADER_LEN)
        return frames

    @property
    def buffered(self) -> int:
        return len(self._buf)


# -- request bodies ---------------------------------------------------------


def _lp(prefix: bytes, rest: bytes) -> bytes:
    return _u16.pack(len(prefix)) + prefix + rest


def _split_lp(body: bytes) -> tuple[bytes, bytes]:
    if len(body) < 2:
        raise BadRequest("body too short for length prefix")
    (n,) = _u16.unpack_from(body, 0)
    if len(body) < 2 + n:
        raise BadRequest("length prefix exceeds body")
    return body[2:2 + n], body[2 + n:]


def set_body(key: bytes, value: bytes) -> bytes:
    return _lp(key, value)


def parse_set(body: bytes) -> tuple[bytes, bytes]:
    return _split_lp(body)


def pub_body(channel: bytes, payload: bytes) -> bytes:
    return _lp(channel, payload)


def parse_pub(body: bytes) -> tuple[bytes, bytes]:
    return _split_lp(body)


def regcb_body(op_mask: int, key_filter: bytes, channel: bytes) -> bytes:
    return bytes((int(op_mask) & 0xFF,)) + _lp(key_filter, channel)


def parse_regcb(body: bytes) -> tuple[int, bytes, bytes]:
    if not body:
        raise BadRequest("empty REGCB body")
    key_filter, channel = _split_lp(body[1:])
    return body[0], key_filter, channel


def unregcb_body(reg_id: int) -> bytes:
    return _u32.pack(reg_id)


def parse_unregcb(body: bytes) -> int:
    if len(body) != 4:
        raise BadRequest("UNREGCB body must be 4 bytes")
    return _u32.unpack(body)[0]


# -- events -----------------------------------------------------------------


@dataclass(frozen=True)
class EventFrameBody:
    channel: bytes
    seq: int
    publish_ts_ns: int
    payload: bytes


def encode_event(channel: bytes, seq: int, publish_ts_ns: int, payload: bytes) -> bytes:
    """Whole EVT frame, header included."""
    return kernels.encode_event(channel, seq, publish_ts_ns, payload)


def decode_event(body: bytes) -> EventFrameBody:
    try:
        return EventFrameBody(*kernels.decode_event(body))
    except ValueError as exc:
        raise BadRequest(str(exc)) from None


# -- replies ----------------------------------------------------------------


def reply(status: int, request_type: int, result: bytes = b"") -> bytes:
    return encode_frame(FrameType.REPLY, _reply_head.pack(status, request_type) + result)


def parse_reply(body: bytes) -> tuple[int, int, bytes]:
    if len(body) < 2:
        raise BadRequest("REPLY body too short")
    return body[0], body[1], body[2:]


def set_result(version: int, op: int) -> bytes:
    return _set_result.pack(version, int(op))


def parse_set_result(result: bytes) -> tuple[int, int]:
    return _set_result.unpack(result)


def regcb_result(reg_id: int) -> bytes:
    return _u32.pack(reg_id)


def parse_regcb_result(result: bytes) -> int:
    return _u32.unpack(result)[0]


def pub_result(seq: int, delivered: int) -> bytes:
    return _pub_result.pack(seq, delivered)


def parse_pub_result(result: bytes) -> tuple[int, int]:
    return _pub_result.unpack(result)


def sub_result(starts: dict[bytes, int]) -> bytes:
    parts = [_u16.pack(len(starts))]
    for channel, start in sorted(starts.items()):
        parts.append(_lp(channel, _start.pack(start)))
    return b"".join(parts)


def parse_sub_result(result: bytes) -> dict[bytes, int]:
    (n,) = _u16.unpack_from(result, 0)
    pos = 2
    out = {}
    for _ in range(n):
        (clen,) = _u16.unpack_from(result, pos)
        channel = result[pos + 2:pos + 2 + clen]
        (start,) = _start.unpack_from(result, pos + 2 + clen)
        out[channel] = start
        pos += 2 + clen + 8
    return out
