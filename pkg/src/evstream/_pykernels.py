"""Pure-Python versions of the hot kernels.

These must stay behaviourally identical to ``_ckernels.pyx``; the test suite
runs both against the same cases.
"""

import struct

MAGIC0 = 0x45
MAGIC1 = 0x56
VERSION = 0x01
HEADER_LEN = 8
FRAME_TYPES = frozenset((0x01, 0x02, 0x03, 0x10, 0x11, 0x12, 0x13, 0x20, 0x21, 0x7F))

ERR_NONE = 0
ERR_BAD_MAGIC = 1
ERR_VERSION = 2
ERR_TOO_LARGE = 3
ERR_FRAME_TYPE = 4

_header = struct.Struct(">BBBBI")
_evt_prefix = struct.Struct(">BBBBIH")
_seq_ts = struct.Struct(">QQ")


def glob_match(pattern, subject):
    """Match ``subject`` against a glob with ``*`` (any run) and ``?`` (one byte)."""
    plen = len(pattern)
    slen = len(subject)
    px = sx = 0
    star_px = -1
    star_sx = 0
    while sx < slen:
        if px < plen:
            c = pattern[px]
            if c == 0x2A:  # '*'
                star_px = px
                star_sx = sx
                px += 1
                continue
            if c == 0x3F or c == subject[sx]:  # '?' or literal
                px += 1
                sx += 1
                continue
        if star_px < 0:
            return False
        star_sx += 1
        sx = star_sx
        px = star_px + 1
    while px < plen and pattern[px] == 0x2A:
        px += 1
    return px == plen


def split_frames(buf, max_body):
    """Cut every complete frame out of ``buf``.

    Returns ``(frames, consumed, need, err)`` where ``frames`` is a list of
    ``(frame_type, body)``, ``consumed`` the byte count of those frames,
    ``need`` the number of further bytes required to complete the next
    frame (0 if ``buf`` ends on a frame boundary) and ``err`` a nonzero code
    when the next frame's header is invalid.
    """
    frames = []
    pos = 0
    n = len(buf)
    while True:
        avail = n - pos
        if avail == 0:
            return frames, pos, 0, ERR_NONE
        if buf[pos] != MAGIC0 or (avail > 1 and buf[pos + 1] != MAGIC1):
            return frames, pos, 0, ERR_BAD_MAGIC
        if avail > 2 and buf[pos + 2] != VERSION:
            return frames, pos, 0, ERR_VERSION
        if avail > 3 and buf[pos + 3] not in FRAME_TYPES:
            return frames, pos, 0, ERR_FRAME_TYPE
        if avail < HEADER_LEN:
            return frames, pos, HEADER_LEN - avail, ERR_NONE
        _, _, _, ftype, body_len = _header.unpack_from(buf, pos)
        if body_len > max_body:
            return frames, pos, 0, ERR_TOO_LARGE
        end = pos + HEADER_LEN + body_len
        if end > n:
            return frames, pos, end - n, ERR_NONE
        frames.append((ftype, bytes(buf[pos + HEADER_LEN:end])))
        pos = end


def encode_event(channel, seq, publish_ts, payload):
    """Build a complete EVT frame (header included)."""
    body_len = 2 + len(channel) + 16 + len(payload)
    return b"".join((
        _evt_prefix.pack(MAGIC0, MAGIC1, VERSION, 0x13, body_len, len(channel)),
        channel,
        _seq_ts.pack(seq, publish_ts),
        payload,
    ))


def decode_event(body):
    """Split an EVT body into ``(channel, seq, publish_ts, payload)``.

    Raises ValueError when the declared channel length does not fit.
    """
    if len(body) < 2:
        raise ValueError("event body shorter than channel length field")
    clen = (body[0] << 8) | body[1]
    if clen == 0 or len(body) < 2 + clen + 16:
        raise ValueError("event body inconsistent with channel length")
    channel = bytes(body[2:2 + clen])
    seq, ts = _seq_ts.unpack_from(body, 2 + clen)
    return channel, seq, ts, bytes(body[2 + clen + 16:])
