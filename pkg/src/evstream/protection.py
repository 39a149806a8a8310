"""Additive cost model for hardware memory protection.

A profile charges a fixed cost per request, a cost per payload byte (the
memory encryption engine) and, once the protected footprint exceeds the
page-cache capacity, a fault penalty for every page the request touches.
The server realises the cost as a busy delay before it replies, so the
emulated overhead consumes CPU the way real enclave work does.
"""

from __future__ import annotations

import dataclasses
import enum
import time
from dataclasses import dataclass

from .errors import InvalidProfile, ProfileLocked

MiB = 1 << 20


class Mode(str, enum.Enum):
    NATIVE = "native"
    ENCLAVE_LIKE = "enclave_like"
    ENCRYPTED_VM_LIKE = "encrypted_vm_like"


@dataclass(frozen=True)
class ProtectionProfile:
    mode: Mode = Mode.NATIVE
    per_call_ns: int = 0
    per_byte_ns: float = 0.0
    epc_capacity_bytes: int = 96 * MiB
    page_size_bytes: int = 4096
    page_fault_penalty_ns: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        for name in ("per_call_ns", "per_byte_ns", "epc_capacity_bytes", "page_fault_penalty_ns"):
            if getattr(self, name) < 0:
                raise InvalidProfile(f"{name} must be >= 0")
        if self.page_size_bytes <= 0:
            raise InvalidProfile("page_size_bytes must be > 0")
        if self.epc_capacity_bytes % self.page_size_bytes:
            raise InvalidProfile("epc_capacity_bytes must be a multiple of page_size_bytes")
        if self.mode is Mode.NATIVE:
            object.__setattr__(self, "per_call_ns", 0)
            object.__setattr__(self, "per_byte_ns", 0.0)
            object.__setattr__(self, "page_fault_penalty_ns", 0)

    @property
    def is_native(self) -> bool:
        return self.mode is Mode.NATIVE

    def replace(self, **changes) -> "ProtectionProfile":
        return dataclasses.replace(self, **changes)

    def overhead_ns(self, request_bytes: int, resident_protected_bytes: int) -> int:
        return overhead_ns(self, request_bytes, resident_protected_bytes)


# placeholder defaults; the per-byte ordering (enclave costlier) is the only intended signal
NATIVE = ProtectionProfile()
ENCLAVE_LIKE = ProtectionProfile(
    Mode.ENCLAVE_LIKE, per_call_ns=2000, per_byte_ns=10.0, page_fault_penalty_ns=25000
)
ENCRYPTED_VM_LIKE = ProtectionProfile(
    Mode.ENCRYPTED_VM_LIKE, per_call_ns=500, per_byte_ns=2.0, page_fault_penalty_ns=0
)

PRESETS = {p.mode.value: p for p in (NATIVE, ENCLAVE_LIKE, ENCRYPTED_VM_LIKE)}


def profile(name: str, **overrides) -> ProtectionProfile:
    """Look up a preset by mode name and apply non-None overrides."""
    try:
        base = PRESETS[name]
    except KeyError:
        raise InvalidProfile(f"unknown profile {name!r}; choose from {sorted(PRESETS)}") from None
    changes = {k: v for k, v in overrides.items() if v is not None}
    return base.replace(**changes) if changes else base


def overhead_ns(profile: ProtectionProfile, request_bytes: int, resident_protected_bytes: int) -> int:
    if request_bytes < 0 or resident_protected_bytes < 0:
        raise ValueError("byte counts must be >= 0")
    if profile.mode is Mode.NATIVE:
        return 0
    cost = profile.per_call_ns + profile.per_byte_ns * request_bytes
    if resident_protected_bytes > profile.epc_capacity_bytes:
        pages = -(-request_bytes // profile.page_size_bytes)
        cost += profile.page_fault_penalty_ns * pages
    return int(round(cost))


def spin_ns(duration_ns: int) -> None:
    """Burn ``duration_ns`` of this thread's CPU time.

    Counting CPU time rather than wall time keeps the cost additive: if the
    scheduler runs another process mid-spin, that time does not count toward
    the overhead.  Sleeping is far too coarse at µs scale.
    """
    if duration_ns <= 0:
        return
    clock = time.thread_time_ns
    deadline = clock() + duration_ns
    while clock() < deadline:
        pass


class ProtectionGate:
    """Per-server holder for the active profile; locked once serving starts."""

    def __init__(self, profile: ProtectionProfile = NATIVE):
        self._profile = profile
        self.locked = False
        self.charged_ns = 0
        self.requests = 0

    @property
    def profile(self) -> ProtectionProfile:
        return self._profile

    @profile.setter
    def profile(self, value: ProtectionProfile) -> None:
        if self.locked:
            raise ProfileLocked("protection profile is immutable while the server runs")
        self._profile = value

    def apply(self, request_bytes: int, resident_protected_bytes: int) -> int:
        """Delay by the modelled overhead and return the charged nanoseconds."""
        ns = overhead_ns(self._profile, request_bytes, resident_protected_bytes)
        if ns:
            spin_ns(ns)
            self.charged_ns += ns
        self.requests += 1
        return ns
