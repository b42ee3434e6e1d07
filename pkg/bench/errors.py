"""
Exceptions raised by the measurement harness.
"""
from orchestrator.errors import NotReady


class BenchError(Exception):
    """Base class for measurement failures."""


class EmptyProbe(BenchError, ValueError):
    """A probe produced no usable sample."""


class UnknownScenario(BenchError, LookupError):
    """The scenario name is not one of the built-in recipes."""


class UnknownInterface(BenchError, LookupError):
    """The network service has no link with the given name."""


__all__ = ["BenchError", "EmptyProbe", "NotReady", "UnknownInterface", "UnknownScenario"]
