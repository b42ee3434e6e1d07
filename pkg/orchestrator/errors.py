"""
Exceptions raised by the orchestrator and the relation bus.
"""
from typing import List, Sequence


class OrchestratorError(Exception):
    """Base class for lifecycle failures."""


class DuplicateSite(OrchestratorError, ValueError):
    """A VIM with the same site id is already registered."""


class ValidationFailed(OrchestratorError, ValueError):
    """A package was refused at onboarding; findings holds the reasons."""

    def __init__(self, findings: Sequence):
        self.findings: List = list(findings)
        summary = "; ".join(str(f) for f in self.findings[:3])
        more = f" (+{len(self.findings) - 3} more)" if len(self.findings) > 3 else ""
        super().__init__(f"package validation failed: {summary}{more}")


class InsufficientResources(OrchestratorError, RuntimeError):
    """A placement asks a site for more than its remaining capacity."""


class Day1Failure(OrchestratorError, RuntimeError):
    def __init__(self, unit: str, action: str, reason: str):
        self.unit = unit
        self.action = action
        super().__init__(f"day-1 action '{action}' failed on {unit}: {reason}")


class PeeringTimeout(OrchestratorError, TimeoutError):
    def __init__(self, relations: Sequence[str], timeout_s: float):
        self.relations = list(relations)
        super().__init__(f"no tunnel session after {timeout_s}s on: {', '.join(self.relations)}")


class UnknownUnit(OrchestratorError, LookupError):
    """No unit with the given id or member index."""


class UnknownNs(OrchestratorError, LookupError):
    """No network service or slice instance with the given id."""


class UnknownAction(OrchestratorError, LookupError):
    """The action is not declared for the phase it was requested in."""


class ActionFailed(OrchestratorError, RuntimeError):
    """An action was accepted but its execution failed."""


class NotReady(OrchestratorError, RuntimeError):
    """The network service has not reached the ready phase."""


class DuplicateRelation(OrchestratorError, ValueError):
    """A relation with the same name already joins the same two units."""


class RelationDeparted(OrchestratorError, RuntimeError):
    """The relation was torn down."""


class RelationAccessDenied(OrchestratorError, PermissionError):
    """A unit tried to read a relation it is not part of."""
