"""
Exceptions raised by the tunnel engine.
"""


class TunnelError(Exception):
    """Base class for all tunnel failures."""


class MalformedKey(TunnelError, ValueError):
    """A key presentation is not 44-character standard base64 of 32 bytes."""


class MalformedFrame(TunnelError, ValueError):
    """A frame does not match the layout of its message type."""


class AuthenticationError(TunnelError, ValueError):
    """An AEAD tag did not verify."""


class StaleTimestamp(TunnelError, ValueError):
    """An initiation carried a timestamp not newer than the last one seen for its initiator."""


class IndexMismatch(TunnelError, ValueError):
    """A frame was addressed to a different session index."""


class ReplayError(TunnelError, ValueError):
    """A transport counter was already used or fell behind the replay window."""


class SessionExpired(TunnelError, RuntimeError):
    """A session passed its time or message limit."""


class UnknownPeer(TunnelError, LookupError):
    """A handshake came from, or was aimed at, a peer the device does not know."""
