"""
Network service and slice instance records.
"""
import enum
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from descriptors.models import QosProfile
from tunnel.session import TransportSession

from .unit import Unit, UnitProxy


class NsPhase(str, enum.Enum):
    DAY0 = "day0"
    DAY1 = "day1"
    READY = "ready"
    FAILED = "failed"
    TERMINATED = "terminated"


@dataclass
class NsInstance:
    id: str
    nsd_id: str
    placement: Dict[str, str]
    wireguard: bool
    flavor_multiplier: float
    qos_class: str
    phase: NsPhase = NsPhase.DAY0
    units: Dict[str, Unit] = field(default_factory=dict)
    proxies: Dict[str, UnitProxy] = field(default_factory=dict)
    relations: List[str] = field(default_factory=list)
    links: Dict[str, str] = field(default_factory=dict)
    # link name -> (requirer unit id, provider unit id), the probe direction
    directions: Dict[str, Tuple[str, str]] = field(default_factory=dict)
    tunnel_subnets: List[str] = field(default_factory=list)
    failure: Optional[str] = None
    released: bool = False

    def unit(self, ref: str) -> Optional[Unit]:
        """Look a unit up by unit id or by member index."""
        if ref in self.units:
            return self.units[ref]
        return next((u for u in self.units.values() if u.member_index == ref), None)

    def units_of(self, vnfd_id: str) -> List[Unit]:
        return [u for u in self.units.values() if u.vnfd.id == vnfd_id]

    @property
    def tunnel_registry(self) -> Dict[str, Dict[str, TransportSession]]:
        """Live sessions per tunneled link, keyed by the unit holding them."""
        registry: Dict[str, Dict[str, TransportSession]] = {}
        for link_name, (requirer, provider) in self.directions.items():
            sessions: Dict[str, TransportSession] = {}
            for unit_id, peer in ((requirer, provider), (provider, requirer)):
                unit = self.units.get(unit_id)
                if unit is None:
                    continue
                iface = next((i for i, c in unit.counterparts.items() if c == peer and i in unit.devices), None)
                if iface is None:
                    continue
                session = unit.devices[iface].session(peer)
                if session is not None:
                    sessions[unit_id] = session
            if sessions:
                registry[link_name] = sessions
        return registry

    def describe(self) -> Dict[str, Any]:
        """Public state only: no key material beyond public keys."""
        tunnels = {
            link: {
                unit_id: {
                    "local_index": f"{s.local_index:#010x}",
                    "remote_index": f"{s.remote_index:#010x}",
                    "established_at": round(s.established_at, 6),
                    "messages_sealed": s.messages_sealed,
                }
                for unit_id, s in sessions.items()
            }
            for link, sessions in self.tunnel_registry.items()
        }
        return {
            "id": self.id,
            "nsd": self.nsd_id,
            "phase": self.phase.value,
            "wireguard": self.wireguard,
            "flavor_multiplier": self.flavor_multiplier,
            "qos_class": self.qos_class,
            "failure": self.failure,
            "units": {
                unit.id: {
                    "member": unit.member_index,
                    "vnfd": unit.vnfd.id,
                    "site": unit.site,
                    "mgmt_address": unit.mgmt_address,
                    "floating_address": unit.floating_address,
                    "vcpus": unit.node.vcpus,
                    "packages": list(unit.day0.packages),
                    "public_keys": {i: d.public_key_b64 for i, d in sorted(unit.devices.items())},
                    "rejected_frames": unit.rejected,
                }
                for unit in self.units.values()
            },
            "links": dict(self.links),
            "tunnel_subnets": list(self.tunnel_subnets),
            "tunnels": tunnels,
        }


@dataclass
class NsiInstance:
    id: str
    nst_id: str
    slice_type: str
    ns: NsInstance
    qos: QosProfile
    kpi: Dict[str, float]
    exposed: Dict[str, str] = field(default_factory=dict)

    def describe(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "nst": self.nst_id,
            "slice_type": self.slice_type,
            "ns": self.ns.id,
            "qos": self.qos.model_dump(),
            "kpi": dict(self.kpi),
            "exposed": dict(self.exposed),
        }
