# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: glob matching, frame splitting, EVT encode/decode."""

from cpython.bytes cimport PyBytes_FromStringAndSize, PyBytes_AS_STRING
from libc.stdint cimport uint8_t, uint16_t, uint32_t, uint64_t
from libc.string cimport memcpy

cdef enum:
    HEADER_LEN = 8

cdef int ERR_NONE = 0
cdef int ERR_BAD_MAGIC = 1
cdef int ERR_VERSION = 2
cdef int ERR_TOO_LARGE = 3
cdef int ERR_FRAME_TYPE = 4


cdef inline bint known_type(uint8_t t) nogil:
    return (t == 0x01 or t == 0x02 or t == 0x03 or t == 0x10 or t == 0x11
            or t == 0x12 or t == 0x13 or t == 0x20 or t == 0x21 or t == 0x7F)


cdef bint _glob(const uint8_t[:] pat, const uint8_t[:] sub) nogil:
    cdef Py_ssize_t plen = pat.shape[0]
    cdef Py_ssize_t slen = sub.shape[0]
    cdef Py_ssize_t px = 0, sx = 0, star_px = -1, star_sx = 0
    cdef uint8_t c
    while sx < slen:
        if px < plen:
            c = pat[px]
            if c == 0x2A:
                star_px = px
                star_sx = sx
                px += 1
                continue
            if c == 0x3F or c == sub[sx]:
                px += 1
                sx += 1
                continue
        if star_px < 0:
            return False
        star_sx += 1
        sx = star_sx
        px = star_px + 1
    while px < plen and pat[px] == 0x2A:
        px += 1
    return px == plen


def glob_match(pattern, subject):
    """Match ``subject`` against a glob with ``*`` (any run) and ``?`` (one byte)."""
    cdef const uint8_t[:] p = pattern
    cdef const uint8_t[:] s = subject
    return _glob(p, s)


def split_frames(buf, Py_ssize_t max_body):
    """Cut every complete frame out of ``buf``; see the pure-Python twin."""
    cdef const uint8_t[:] b = buf
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t pos = 0, avail, end
    cdef uint32_t body_len
    cdef uint8_t ftype
    frames = []
    while True:
        avail = n - pos
        if avail == 0:
            return frames, pos, 0, ERR_NONE
        if b[pos] != 0x45 or (avail > 1 and b[pos + 1] != 0x56):
            return frames, pos, 0, ERR_BAD_MAGIC
        if avail > 2 and b[pos + 2] != 0x01:
            return frames, pos, 0, ERR_VERSION
        if avail > 3 and not known_type(b[pos + 3]):
            return frames, pos, 0, ERR_FRAME_TYPE
        if avail < HEADER_LEN:
            return frames, pos, HEADER_LEN - avail, ERR_NONE
        ftype = b[pos + 3]
        body_len = ((<uint32_t>b[pos + 4] << 24) | (<uint32_t>b[pos + 5] << 16)
                    | (<uint32_t>b[pos + 6] << 8) | <uint32_t>b[pos + 7])
        if body_len > max_body:
            return frames, pos, 0, ERR_TOO_LARGE
        end = pos + HEADER_LEN + body_len
        if end > n:
            return frames, pos, end - n, ERR_NONE
        frames.append((ftype, PyBytes_FromStringAndSize(<const char*>&b[pos + HEADER_LEN] if body_len else NULL, body_len)))
        pos = end


cdef inline void put_u64(char* p, uint64_t v) nogil:
    cdef int i
    for i in range(8):
        p[7 - i] = <char>(v & 0xFF)
        v >>= 8


cdef inline uint64_t get_u64(const uint8_t[:] b, Py_ssize_t off) nogil:
    cdef uint64_t v = 0
    cdef int i
    for i in range(8):
        v = (v << 8) | b[off + i]
    return v


def encode_event(bytes channel, uint64_t seq, uint64_t publish_ts, payload):
    """Build a complete EVT frame (header included)."""
    cdef const uint8_t[:] pl = payload
    cdef Py_ssize_t clen = len(channel)
    cdef Py_ssize_t plen = pl.shape[0]
    cdef uint32_t body_len = <uint32_t>(2 + clen + 16 + plen)
    out = PyBytes_FromStringAndSize(NULL, HEADER_LEN + body_len)
    cdef char* o = PyBytes_AS_STRING(out)
    o[0] = 0x45
    o[1] = 0x56
    o[2] = 0x01
    o[3] = 0x13
    o[4] = <char>((body_len >> 24) & 0xFF)
    o[5] = <char>((body_len >> 16) & 0xFF)
    o[6] = <char>((body_len >> 8) & 0xFF)
    o[7] = <char>(body_len & 0xFF)
    o[8] = <char>((clen >> 8) & 0xFF)
    o[9] = <char>(clen & 0xFF)
    memcpy(o + 10, PyBytes_AS_STRING(channel), clen)
    put_u64(o + 10 + clen, seq)
    put_u64(o + 18 + clen, publish_ts)
    if plen:
        memcpy(o + 26 + clen, &pl[0], plen)
    return out


def decode_event(body):
    """Split an EVT body into ``(channel, seq, publish_ts, payload)``."""
    cdef const uint8_t[:] b = body
    cdef Py_ssize_t n = b.shape[0]
    if n < 2:
        raise ValueError("event body shorter than channel length field")
    cdef Py_ssize_t clen = (<Py_ssize_t>b[0] << 8) | b[1]
    if clen == 0 or n < 2 + clen + 16:
        raise ValueError("event body inconsistent with channel length")
    channel = PyBytes_FromStringAndSize(<const char*>&b[2], clen)
    seq = get_u64(b, 2 + clen)
    ts = get_u64(b, 10 + clen)
    cdef Py_ssize_t rest = n - (18 + clen)
    payload = PyBytes_FromStringAndSize(<const char*>&b[18 + clen] if rest else NULL, rest)
    return channel, seq, ts, payload
