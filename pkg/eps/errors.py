"""
Exceptions raised by the emulated EPS network functions.
"""


class EpsError(Exception):
    """Base class for EPS failures."""


class MalformedMessage(EpsError, ValueError):
    """Bytes that do not decode as an EPS message."""


class UnknownSubscriber(EpsError, LookupError):
    """The HSS has no record for an IMSI."""


class AttachRejected(EpsError, RuntimeError):
    """The network answered an attach with AttachReject."""


class AttachTimeout(EpsError, TimeoutError):
    """No attach answer arrived in time."""


class UnknownTeid(EpsError, LookupError):
    """User-plane data referenced a tunnel endpoint id with no session."""


class NotAttached(EpsError, RuntimeError):
    """A user-plane operation was requested before the UE attached."""
