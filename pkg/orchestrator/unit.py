"""
Units: the running instance of one NS member.

A unit owns its emulated node, its tunnel devices (one per tunneled interface, private keys never
leave them) and the network function application. The orchestrator only reaches a unit through
its UnitProxy, the management channel that executes actions.
"""
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Mapping, Optional, Set, Tuple

from config import Settings
from descriptors.models import ActionSpec, Vnfd
from eps.errors import MalformedMessage
from eps.functions import NetworkFunction
from eps.messages import MessageReader
from netem.fabric import Fabric
from netem.link import DEFAULT_CLASS
from netem.node import EmuNode
from tunnel.device import PeerDescriptor, TunnelDevice
from tunnel.session import RekeyPolicy

from .errors import ActionFailed, NotReady, UnknownAction
from .relations import RelationBus

if TYPE_CHECKING:
    from .charms.base import Charm

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RelationBinding:
    """One side of a peering relation as the unit sees it."""

    relation_id: str
    name: str
    role: str
    interface: str
    counterpart: str
    network: str
    local_address: str
    remote_address: str


@dataclass
class Day0State:
    admin_user: str = ""
    packages: List[str] = field(default_factory=list)
    files: Dict[str, str] = field(default_factory=dict)


class Unit:
    def __init__(
        self,
        unit_id: str,
        member_index: str,
        vnfd: Vnfd,
        site: str,
        node: EmuNode,
        fabric: Fabric,
        bus: RelationBus,
        settings: Settings,
        qos_class: str = DEFAULT_CLASS,
    ):
        self.id = unit_id
        self.member_index = member_index
        self.vnfd = vnfd
        self.site = site
        self.node = node
        self.fabric = fabric
        self.bus = bus
        self.settings = settings
        self.qos_class = qos_class
        self.internal_address = ""
        self.floating_address = ""
        self.day0 = Day0State()
        self.app: Optional[NetworkFunction] = None
        self.devices: Dict[str, TunnelDevice] = {}
        self.counterparts: Dict[str, str] = {}
        self.tunneled: Set[str] = set()
        self.bindings: List[RelationBinding] = []
        self.rejected_frames = 0
        self._readers: Dict[Tuple[str, str], MessageReader] = {}
        self._next_port = settings.base_listen_port
        node.handler = self.on_datagram

    @property
    def mgmt_address(self) -> str:
        return self.internal_address

    @property
    def rejected(self) -> int:
        """Frames refused on tunneled interfaces, by the readiness gate or by a device."""
        return self.rejected_frames + sum(d.rejected for d in self.devices.values())

    def binding(self, relation_id: str) -> Optional[RelationBinding]:
        return next((b for b in self.bindings if b.relation_id == relation_id), None)

    def apply_day0(self, wireguard: bool) -> None:
        cloud_init = self.vnfd.cloud_init
        self.day0.admin_user = cloud_init.admin_user
        self.day0.packages = list(cloud_init.packages)
        if wireguard and "wireguard" not in self.day0.packages:
            self.day0.packages.append("wireguard")
        self.day0.files = {f.path: f.content for f in cloud_init.files}
        logger.debug(f"{self.id}: day-0 applied, packages {self.day0.packages}")

    # -- tunnel devices ---------------------------------------------------------------------

    def create_device(self, interface: str, network: str, address: str) -> TunnelDevice:
        device = self.devices.get(interface)
        if device is not None:
            return device
        port = self._next_port
        self._next_port += 1
        clock = self.fabric.clock
        s = self.settings
        device = TunnelDevice(
            name=f"{self.id}/{interface}",
            listen_port=port,
            tunnel_network=network,
            tunnel_address=address,
            clock=clock.seconds,
            transmit=lambda peer, desc, frame, sealed: self._transmit(interface, desc, frame, sealed),
            deliver=lambda peer, plaintext: self._feed(interface, peer, plaintext),
            rng=self.fabric.random_bytes,
            schedule=lambda seconds, cb: clock.call_later(seconds * 1e6, cb),
            policy=RekeyPolicy(s.rekey_after_s, s.reject_after_s, s.rekey_after_messages),
            retry_s=s.handshake_retry_s,
            persistent_keepalive_s=s.persistent_keepalive_s,
            mtu=s.tunnel_inner_mtu,
        )
        self.devices[interface] = device
        logger.info(f"{self.id}: tunnel device on {interface} listening on {port} ({device.public_key_b64})")
        return device

    def _transmit(self, interface: str, peer: PeerDescriptor, frame: bytes, sealed: bool) -> None:
        dst = self.fabric.node_for_address(peer.endpoint_host)
        self.fabric.send(self.node.id, interface, dst.id, frame, self.qos_class, sealed)

    # -- data path --------------------------------------------------------------------------

    def send(self, interface: str, data: bytes) -> None:
        """Send application bytes to the counterpart on an interface, split to the interface MTU."""
        counterpart = self.counterparts.get(interface)
        if counterpart is None:
            raise NotReady(f"{self.id} has no counterpart on {interface}")
        if interface in self.tunneled:
            device = self.devices.get(interface)
            if device is None:
                raise NotReady(f"{self.id}: tunnel on {interface} is not set up")
            for offset in range(0, len(data), device.mtu):
                device.send(counterpart, data[offset:offset + device.mtu])
            return
        mtu = self.fabric.payload_mtu(self.node.id, interface)
        for offset in range(0, len(data), mtu):
            self.fabric.send(self.node.id, interface, counterpart, data[offset:offset + mtu], self.qos_class)

    def on_datagram(self, interface: str, src: str, datagram: bytes) -> None:
        if interface in self.tunneled:
            device = self.devices.get(interface)
            if device is None:
                self.rejected_frames += 1
                logger.debug(f"{self.id}: {len(datagram)}-byte frame on {interface} before the tunnel exists")
                return
            device.receive(datagram)
            return
        self._feed(interface, src, datagram)

    def _feed(self, interface: str, peer: str, data: bytes) -> None:
        reader = self._readers.setdefault((interface, peer), MessageReader())
        try:
            messages = reader.feed(data)
        except MalformedMessage as e:
            self.rejected_frames += 1
            logger.debug(f"{self.id}: dropping malformed data on {interface}: {e}")
            return
        if self.app is None:
            return
        for msg in messages:
            self.app.receive(interface, msg)

    def teardown(self) -> None:
        if self.app is not None:
            self.app.stop()
        for device in self.devices.values():
            device.close()
        self.devices.clear()
        self._readers.clear()
        self.node.handler = None


class UnitProxy:
    """
    Management channel of a unit. Actions are checked against the VNFD declaration, their
    parameters coerced to the declared types, then handed to the unit's charm.
    """

    def __init__(self, unit: Unit, charm: "Charm"):
        self.unit = unit
        self.charm = charm

    @property
    def unit_id(self) -> str:
        return self.unit.id

    @property
    def mgmt_address(self) -> str:
        return self.unit.mgmt_address

    def execute(self, action: str, params: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
        spec = self.unit.vnfd.action(action)
        if spec is None:
            raise UnknownAction(f"{self.unit.vnfd.id} declares no action '{action}'")
        coerced = coerce_params(spec, params or {})
        logger.info(f"{self.unit.id}: running {action} via {self.mgmt_address}")
        return self.charm.execute(self.unit, action, coerced)


def coerce_params(spec: ActionSpec, params: Mapping[str, Any]) -> Dict[str, Any]:
    declared = {p.name: p for p in spec.params}
    unknown = sorted(set(params) - set(declared))
    if unknown:
        raise ActionFailed(f"action '{spec.name}' has no parameter(s) {', '.join(unknown)}")
    result: Dict[str, Any] = {}
    for name, param in declared.items():
        if name not in params:
            if param.required:
                raise ActionFailed(f"action '{spec.name}' requires '{name}'")
            continue
        value = params[name]
        try:
            if param.type == "int":
                result[name] = int(value)
            elif param.type == "bool":
                result[name] = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes", "on")
            else:
                result[name] = str(value)
        except (TypeError, ValueError):
            raise ActionFailed(f"parameter '{name}' of '{spec.name}' must be {param.type}") from None
    return result
