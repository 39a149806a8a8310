"""Event streaming over an in-memory key-value store.

Store mutations fire registered callbacks that publish events to
pattern-subscribed channels; a benchmark pipeline measures publish-to-all
latency, emulated memory-protection overhead and energy per message.
"""

__version__ = "0.1.0"

from .errors import EvStreamError  # noqa: E402
from .modules import CallbackRegistration, ModuleHost  # noqa: E402
from .protection import ENCLAVE_LIKE, ENCRYPTED_VM_LIKE, NATIVE, ProtectionProfile, overhead_ns  # noqa: E402
from .pubsub import Broker, Event, Subscriber  # noqa: E402
from .store import Entry, OpKind, Store  # noqa: E402

__all__ = [
    "Broker", "CallbackRegistration", "ENCLAVE_LIKE", "ENCRYPTED_VM_LIKE", "Entry", "Event",
    "EvStreamError", "ModuleHost", "NATIVE", "OpKind", "ProtectionProfile", "Store", "Subscriber",
    "overhead_ns",
]
