"""Exception hierarchy shared by every layer of the streaming node.

Each error that can cross the wire carries a one-byte ``status`` code so the
server can report it in a REPLY frame and the client can re-raise the same
class on its side.
"""


class EvStreamError(Exception):
    """Base class for all errors raised by this package."""

    status = 0x7E


# -- store ------------------------------------------------------------------


class EmptyKey(EvStreamError):
    status = 0x02


class KeyTooLong(EvStreamError):
    status = 0x03


class ValueTooLarge(EvStreamError):
    status = 0x04


class NotFound(EvStreamError):
    status = 0x01


# -- module host / pubsub ---------------------------------------------------


class InvalidGlob(EvStreamError):
    status = 0x05


class EmptyOpMask(EvStreamError):
    status = 0x06


class InvalidChannelName(EvStreamError):
    status = 0x07


class UnknownId(EvStreamError):
    status = 0x08


class UnknownSubscription(EvStreamError):
    status = 0x09


class Overflow(EvStreamError):
    """A subscriber fell too far behind and was disconnected."""

    status = 0x0A


class BadRequest(EvStreamError):
    """A well-framed request whose body could not be parsed."""

    status = 0x0B


# -- wire -------------------------------------------------------------------


class ProtocolError(EvStreamError):
    """Framing violation; the connection must be closed."""


class BadMagic(ProtocolError):
    pass


class UnsupportedVersion(ProtocolError):
    pass


class BodyTooLarge(ProtocolError):
    pass


class UnknownFrameType(ProtocolError):
    pass


class BindFailure(EvStreamError):
    pass


class ConnectionLost(EvStreamError):
    pass


# -- protection / bench / energy --------------------------------------------


class ProfileLocked(EvStreamError):
    """The protection profile cannot change while a server is running."""


class InvalidProfile(EvStreamError):
    pass


class InvalidSpec(EvStreamError):
    pass


class EmptyInput(EvStreamError):
    pass


class TooFewSamples(EvStreamError):
    pass


class NonMonotonicTime(EvStreamError):
    pass


class InvalidModel(EvStreamError):
    pass


class DegenerateInput(EvStreamError):
    pass


class MissingInputs(EvStreamError):
    pass


BY_STATUS = {
    cls.status: cls
    for cls in (
        NotFound,
        EmptyKey,
        KeyTooLong,
        ValueTooLarge,
        InvalidGlob,
        EmptyOpMask,
        InvalidChannelName,
        UnknownId,
        UnknownSubscription,
        Overflow,
        BadRequest,
    )
}


def from_status(status: int, message: str = "") -> EvStreamError:
    return BY_STATUS.get(status, EvStreamError)(message)
