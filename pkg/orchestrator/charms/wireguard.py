"""
Wireguard charm: tunnel setup, automatic peering over relations and peer maintenance actions.

Keys are generated inside the unit's tunnel devices; only public keys and endpoint data are
published on relations.
"""
import logging
from typing import Any, Dict, List, Optional

from tunnel.device import PeerDescriptor, TunnelDevice
from tunnel.errors import UnknownPeer
from tunnel.keys import decode_key, encode_key

from ..errors import ActionFailed
from ..relations import EventKind, RelationEvent
from ..unit import RelationBinding, Unit
from .base import Charm

logger = logging.getLogger(__name__)

RELATION_PREFIX = "wgpeer-"
REQUIRED_KEYS = ("public_key", "endpoint_host", "endpoint_port", "tunnel_address")


class WireguardCharm(Charm):
    def __init__(self, name: str = "wireguard"):
        super().__init__(name)
        self.register("wg-setup", self.wg_setup)
        self.register("add-peer", self.add_peer)
        self.register("remove-peer", self.remove_peer)
        self.register("rotate-key", self.rotate_key)
        self.register("show-peers", self.show_peers)
        self.register_relation(RELATION_PREFIX, self.on_peer_relation)

    @staticmethod
    def _device(unit: Unit, interface: str) -> TunnelDevice:
        device = unit.devices.get(interface)
        if device is None:
            raise ActionFailed(f"{unit.id} has no tunnel on '{interface}'")
        return device

    @staticmethod
    def _publish_local(unit: Unit, binding: RelationBinding, device: TunnelDevice) -> None:
        unit.bus.publish(binding.relation_id, unit.id, {
            "public_key": device.public_key_b64,
            "endpoint_port": str(device.listen_port),
            "tunnel_address": binding.local_address,
            "allowed_cidrs": f"{binding.local_address}/32",
        })

    def wg_setup(self, unit: Unit, params: Dict[str, Any]) -> Dict[str, Any]:
        """
        Create one tunnel device per peering relation, join the relation and publish the
        public half of the peering data. The endpoint host is filled in by the orchestrator.
        """
        created: List[str] = []
        for binding in unit.bindings:
            device = unit.create_device(binding.interface, binding.network, binding.local_address)
            unit.bus.join(binding.relation_id, unit.id)
            self._publish_local(unit, binding, device)
            created.append(binding.interface)
        return {"interfaces": created}

    def add_peer(self, unit: Unit, params: Dict[str, Any]) -> Dict[str, Any]:
        device = self._device(unit, params["interface"])
        allowed = params.get("allowed_cidrs") or f"{params['tunnel_address']}/32"
        descriptor = PeerDescriptor(
            remote_public=decode_key(params["public_key"]),
            endpoint_host=params["endpoint"],
            endpoint_port=params["port"],
            tunnel_address=params["tunnel_address"],
            allowed_cidrs=tuple(c.strip() for c in allowed.split(",") if c.strip()),
        )
        peer = params["peer_name"]
        device.apply_peer(peer, descriptor)
        if device.session(peer) is None:
            device.connect(peer)
        return {"peer": peer, "awaiting": [[params["interface"], peer]]}

    def remove_peer(self, unit: Unit, params: Dict[str, Any]) -> Dict[str, Any]:
        device = self._device(unit, params["interface"])
        try:
            device.remove_peer(params["peer_name"])
        except UnknownPeer as e:
            raise ActionFailed(str(e)) from e
        return {"removed": params["peer_name"]}

    def rotate_key(self, unit: Unit, params: Dict[str, Any]) -> Dict[str, Any]:
        interface: Optional[str] = params.get("interface")
        targets = [interface] if interface else sorted(unit.devices)
        rotated: Dict[str, str] = {}
        for name in targets:
            device = self._device(unit, name)
            device.rotate_key()
            rotated[name] = device.public_key_b64
            for binding in unit.bindings:
                if binding.interface == name:
                    self._publish_local(unit, binding, device)
        return {"rotated": rotated}

    def show_peers(self, unit: Unit, params: Dict[str, Any]) -> Dict[str, Any]:
        result: Dict[str, Any] = {}
        for name, device in sorted(unit.devices.items()):
            result[name] = {
                "public_key": device.public_key_b64,
                "listen_port": device.listen_port,
                "address": device.tunnel_address,
                "peers": {
                    peer: {
                        "public_key": encode_key(desc.remote_public),
                        "endpoint": f"{desc.endpoint_host}:{desc.endpoint_port}",
                        "allowed_cidrs": list(desc.allowed_cidrs),
                        "session": device.session(peer) is not None,
                    }
                    for peer, desc in sorted(device.peers.items())
                },
            }
        return result

    def on_peer_relation(self, unit: Unit, event: RelationEvent) -> None:
        binding = unit.binding(event.relation_id)
        if binding is None:
            return
        device = unit.devices.get(binding.interface)
        if device is None:
            return
        if event.kind is EventKind.DEPARTED:
            if binding.counterpart in device.peers:
                device.remove_peer(binding.counterpart)
            return
        remote = unit.bus.read_remote(event.relation_id, unit.id)
        if any(key not in remote for key in REQUIRED_KEYS):
            logger.debug(f"{unit.id}: peering data on {event.relation_id} incomplete (v{remote.version})")
            return
        allowed = remote.get("allowed_cidrs") or f"{remote['tunnel_address']}/32"
        descriptor = PeerDescriptor(
            remote_public=decode_key(remote["public_key"]),
            endpoint_host=remote["endpoint_host"],
            endpoint_port=int(remote["endpoint_port"]),
            tunnel_address=remote["tunnel_address"],
            allowed_cidrs=tuple(allowed.split(",")),
        )
        changed = device.apply_peer(binding.counterpart, descriptor)
        if changed and binding.role == "requirer" and device.session(binding.counterpart) is None:
            device.connect(binding.counterpart)
