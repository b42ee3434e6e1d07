"""
Relation bus: two-party data bags exchanged between units, with ordered change events.

Each side of a relation owns one bag that only it writes and only the other side reads. Every
publish bumps the bag version and queues a "changed" event for the opposite unit. Delivery is
at-least-once, so handlers must be idempotent.
"""
import enum
import logging
import threading
from collections import deque
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Deque, Dict, List, Mapping, Optional, Tuple

from .errors import DuplicateRelation, RelationAccessDenied, RelationDeparted, UnknownUnit

logger = logging.getLogger(__name__)

# Keys every wireguard peering bag carries.
PEERING_KEYS = ("public_key", "endpoint_host", "endpoint_port", "tunnel_address", "allowed_cidrs")


class RelationState(str, enum.Enum):
    CREATED = "created"
    JOINED_ONE = "joined_one"
    JOINED_BOTH = "joined_both"
    DEPARTED = "departed"


class EventKind(str, enum.Enum):
    JOINED = "joined"
    CHANGED = "changed"
    DEPARTED = "departed"


@dataclass(frozen=True)
class BagSnapshot:
    """Immutable copy of a bag at one version."""

    entries: Mapping[str, str]
    version: int

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return self.entries.get(key, default)

    def __getitem__(self, key: str) -> str:
        return self.entries[key]

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)


class RelationDataBag:
    def __init__(self):
        self._entries: Dict[str, str] = {}
        self.version = 0

    def merge(self, entries: Mapping[str, str]) -> int:
        self._entries.update(entries)
        self.version += 1
        return self.version

    def snapshot(self) -> BagSnapshot:
        return BagSnapshot(MappingProxyType(dict(self._entries)), self.version)


@dataclass(frozen=True)
class RelationEvent:
    kind: EventKind
    relation_id: str
    relation_name: str
    origin: str
    version: int


@dataclass
class RelationInstance:
    id: str
    name: str
    side_a: str
    side_b: str
    bag_a: RelationDataBag = field(default_factory=RelationDataBag)
    bag_b: RelationDataBag = field(default_factory=RelationDataBag)
    state: RelationState = RelationState.CREATED
    joined: List[str] = field(default_factory=list)

    def sides(self) -> Tuple[str, str]:
        return self.side_a, self.side_b

    def other(self, unit: str) -> str:
        if unit == self.side_a:
            return self.side_b
        if unit == self.side_b:
            return self.side_a
        raise RelationAccessDenied(f"{unit} is not a side of relation {self.id}")

    def bag_of(self, unit: str) -> RelationDataBag:
        if unit == self.side_a:
            return self.bag_a
        if unit == self.side_b:
            return self.bag_b
        raise RelationAccessDenied(f"{unit} is not a side of relation {self.id}")


class RelationBus:
    """Serializes publishes and holds one FIFO event queue per unit."""

    def __init__(self):
        self._lock = threading.RLock()
        self._queues: Dict[str, Deque[RelationEvent]] = {}
        self._relations: Dict[str, RelationInstance] = {}
        self._seq = 0

    # -- units ----------------------------------------------------------------------------

    def register_unit(self, unit: str) -> None:
        with self._lock:
            self._queues.setdefault(unit, deque())

    def unregister_unit(self, unit: str) -> None:
        with self._lock:
            self._queues.pop(unit, None)

    def _require_unit(self, unit: str) -> Deque[RelationEvent]:
        queue = self._queues.get(unit)
        if queue is None:
            raise UnknownUnit(f"unit '{unit}' is not registered on the relation bus")
        return queue

    def _queue(self, unit: str, event: RelationEvent) -> None:
        queue = self._queues.get(unit)
        if queue is not None:
            queue.append(event)

    # -- relations ------------------------------------------------------------------------

    def create_relation(self, name: str, unit_a: str, unit_b: str) -> RelationInstance:
        with self._lock:
            self._require_unit(unit_a)
            self._require_unit(unit_b)
            pair = {unit_a, unit_b}
            for relation in self._relations.values():
                if (relation.name == name and set(relation.sides()) == pair
                        and relation.state is not RelationState.DEPARTED):
                    raise DuplicateRelation(f"relation '{name}' between {unit_a} and {unit_b} already exists")
            self._seq += 1
            relation = RelationInstance(id=f"{name}:{self._seq}", name=name, side_a=unit_a, side_b=unit_b)
            self._relations[relation.id] = relation
            logger.info(f"Relation {relation.id} created between {unit_a} and {unit_b}")
            return relation

    def relation(self, relation_id: str) -> RelationInstance:
        try:
            return self._relations[relation_id]
        except KeyError:
            raise UnknownUnit(f"unknown relation '{relation_id}'") from None

    def relations_of(self, unit: str) -> List[RelationInstance]:
        return [r for r in self._relations.values() if unit in r.sides()]

    def join(self, relation_id: str, unit: str) -> RelationState:
        """Attach a unit's handlers. The joining unit is told about its counterpart."""
        with self._lock:
            relation = self.relation(relation_id)
            if relation.state is RelationState.DEPARTED:
                raise RelationDeparted(f"relation {relation_id} has departed")
            other = relation.other(unit)
            if unit not in relation.joined:
                relation.joined.append(unit)
                relation.state = (RelationState.JOINED_BOTH if len(relation.joined) == 2
                                  else RelationState.JOINED_ONE)
            version = relation.bag_of(other).version
            self._queue(unit, RelationEvent(EventKind.JOINED, relation.id, relation.name, other, version))
            return relation.state

    def publish(self, relation_id: str, unit: str, entries: Mapping[str, str]) -> int:
        """Merge entries into the unit's own bag. Returns the new bag version."""
        with self._lock:
            relation = self.relation(relation_id)
            if relation.state is RelationState.DEPARTED:
                raise RelationDeparted(f"relation {relation_id} has departed")
            other = relation.other(unit)
            for key, value in entries.items():
                if not isinstance(key, str) or not isinstance(value, str):
                    raise ValueError("relation data keys and values must be strings")
                if "private" in key.lower():
                    raise ValueError(f"refusing to publish '{key}' on relation {relation_id}")
            version = relation.bag_of(unit).merge(entries)
            self._queue(other, RelationEvent(EventKind.CHANGED, relation.id, relation.name, unit, version))
            logger.debug(f"{unit} published {sorted(entries)} on {relation_id} (v{version})")
            return version

    def read_remote(self, relation_id: str, reader: str) -> BagSnapshot:
        """Snapshot of the counterpart's bag as seen by reader."""
        relation = self.relation(relation_id)
        other = relation.other(reader)
        return relation.bag_of(other).snapshot()

    def read_own(self, relation_id: str, unit: str) -> BagSnapshot:
        return self.relation(relation_id).bag_of(unit).snapshot()

    def depart(self, relation_id: str) -> None:
        with self._lock:
            relation = self.relation(relation_id)
            if relation.state is RelationState.DEPARTED:
                return
            relation.state = RelationState.DEPARTED
            for unit in relation.sides():
                other = relation.other(unit)
                self._queue(unit, RelationEvent(EventKind.DEPARTED, relation.id, relation.name, other,
                                                relation.bag_of(other).version))
            logger.info(f"Relation {relation_id} departed")

    # -- events ---------------------------------------------------------------------------

    def next_event(self, unit: str) -> Optional[RelationEvent]:
        with self._lock:
            queue = self._require_unit(unit)
            return queue.popleft() if queue else None

    def requeue(self, unit: str, event: RelationEvent) -> None:
        """Put an event back at the head of a unit's queue, for redelivery after a failed handler."""
        with self._lock:
            self._require_unit(unit).appendleft(event)

    def pending(self, unit: str) -> int:
        return len(self._require_unit(unit))

    def bags(self) -> Dict[str, Dict[str, BagSnapshot]]:
        """Every bag on the bus, keyed by relation id and owning unit."""
        return {
            rid: {r.side_a: r.bag_a.snapshot(), r.side_b: r.bag_b.snapshot()}
            for rid, r in self._relations.items()
        }
