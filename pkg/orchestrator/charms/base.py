"""
Charm base: a named set of registered actions plus relation event handlers.
"""
import logging
from typing import Any, Callable, Dict, List

from ..errors import ActionFailed, UnknownAction
from ..relations import RelationEvent
from ..unit import Unit

logger = logging.getLogger(__name__)

Action = Callable[[Unit, Dict[str, Any]], Dict[str, Any]]
RelationHandler = Callable[[Unit, RelationEvent], None]


class Charm:
    """
    Operator logic that runs inside a unit. Subclasses register their actions in __init__,
    each action taking the unit and its coerced parameters and returning a result mapping.
    """

    def __init__(self, name: str):
        self.name = name
        self._actions: Dict[str, Action] = {}
        self._relation_handlers: List[tuple] = []

    def register(self, action_name: str, action: Action) -> None:
        self._actions[action_name] = action

    def register_relation(self, prefix: str, handler: RelationHandler) -> None:
        self._relation_handlers.append((prefix, handler))

    @property
    def actions(self) -> List[str]:
        return sorted(self._actions)

    def handles_relation(self, relation_name: str) -> bool:
        return any(relation_name.startswith(prefix) for prefix, _ in self._relation_handlers)

    def execute(self, unit: Unit, action: str, params: Dict[str, Any]) -> Dict[str, Any]:
        handler = self._actions.get(action)
        if handler is None:
            raise UnknownAction(f"charm {self.name} has no action '{action}'")
        try:
            return handler(unit, params)
        except (UnknownAction, ActionFailed):
            raise
        except Exception as e:
            logger.error(f"{unit.id}: action {action} failed: {e}")
            raise ActionFailed(f"{action} on {unit.id}: {e}") from e

    def handle_event(self, unit: Unit, event: RelationEvent) -> None:
        for prefix, handler in self._relation_handlers:
            if event.relation_name.startswith(prefix):
                handler(unit, event)
                return
        logger.debug(f"{unit.id}: no handler for {event.kind.value} on {event.relation_name}")
