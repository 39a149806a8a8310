"""Size limits and validation for keys, values, channels and glob patterns."""

from .errors import EmptyKey, InvalidChannelName, InvalidGlob, KeyTooLong, ValueTooLarge
from .kernels import glob_match

MAX_KEY = 512
MAX_VALUE = 1 << 20
MAX_CHANNEL = 128
MAX_PATTERN = 512


def as_bytes(x) -> bytes:
    if isinstance(x, bytes):
        return x
    if isinstance(x, str):
        return x.encode()
    return bytes(x)


def check_key(key: bytes) -> None:
    if not key:
        raise EmptyKey("key must not be empty")
    if len(key) > MAX_KEY:
        raise KeyTooLong(f"key is {len(key)} bytes, limit {MAX_KEY}")


def check_value(value: bytes, limit: int = MAX_VALUE) -> None:
    if len(value) > limit:
        raise ValueTooLarge(f"value is {len(value)} bytes, limit {limit}")


def check_channel(channel: bytes) -> None:
    if not 1 <= len(channel) <= MAX_CHANNEL:
        raise InvalidChannelName(f"channel name must be 1..{MAX_CHANNEL} bytes, got {len(channel)}")


def check_glob(pattern: bytes) -> None:
    # grammar is literals plus '*' and '?', so only the length can be wrong
    if not 1 <= len(pattern) <= MAX_PATTERN:
        raise InvalidGlob(f"pattern must be 1..{MAX_PATTERN} bytes, got {len(pattern)}")


def is_literal(pattern: bytes) -> bool:
    return b"*" not in pattern and b"?" not in pattern


__all__ = [
    "MAX_KEY", "MAX_VALUE", "MAX_CHANNEL", "MAX_PATTERN",
    "as_bytes", "check_key", "check_value", "check_channel", "check_glob",
    "glob_match", "is_literal",
]
