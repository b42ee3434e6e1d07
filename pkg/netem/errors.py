"""
Exceptions raised by the emulated fabric.
"""


class NetemError(Exception):
    """Base class for fabric failures."""


class NoRoute(NetemError, LookupError):
    """The destination is not reachable from the sending interface."""


class FrameTooLarge(NetemError, ValueError):
    """A frame exceeds the underlay MTU."""


class DuplicateSite(NetemError, ValueError):
    """A site with the same id is already registered."""


class DuplicateIntersiteLink(NetemError, ValueError):
    """The two sites are already joined by an intersite link."""


class UnknownNode(NetemError, LookupError):
    """No node, site or link has the given id."""
