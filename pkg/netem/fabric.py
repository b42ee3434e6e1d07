"""
The emulated fabric: sites, nodes, links, intersite links with optional site tunnels, and the
per-frame pipeline that moves a datagram from one node to another in virtual time.
"""
import ipaddress
import logging
import random
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Tuple

import simpy

from config import Settings, get_settings
from tunnel.frames import TRANSPORT_OVERHEAD, decode_frame
from tunnel.handshake import finalize, initiate, respond
from tunnel.keys import generate_keypair
from tunnel.session import RekeyPolicy, RekeyStatus, TransportSession, rekey_status

from .clock import Clock
from .errors import DuplicateIntersiteLink, DuplicateSite, FrameTooLarge, NoRoute, UnknownNode
from .link import DEFAULT_CLASS, EmuLink, FairQueue, IntersiteLink
from .node import EmuNode
from .tap import Tap

logger = logging.getLogger(__name__)


@dataclass
class Site:
    id: str
    backplane: FairQueue
    fabric_mbps: float
    nodes: List[str] = field(default_factory=list)
    gateway: Optional[EmuNode] = None


class Fabric:
    """
    Discrete-event network shared by every network service of a testbed.

    Frames pipeline through: sender CPU, site gateway (cross-site with a site tunnel), link
    transmitter, site backplane (intra-site only), propagation, remote gateway, receiver CPU.
    """

    def __init__(self, settings: Optional[Settings] = None, seed: int = 0, clock: Optional[Clock] = None):
        self.settings = settings or get_settings()
        self.clock = clock or Clock()
        self.env: simpy.Environment = self.clock.env
        self.rng = random.Random(seed)
        self.sites: Dict[str, Site] = {}
        self.nodes: Dict[str, EmuNode] = {}
        self.links: Dict[str, EmuLink] = {}
        self._intersite: Dict[FrozenSet[str], IntersiteLink] = {}
        self._addresses: Dict[str, str] = {}
        self._site_sessions: Dict[FrozenSet[str], Dict[str, TransportSession]] = {}
        self._site_previous: Dict[FrozenSet[str], Dict[str, TransportSession]] = {}
        self._site_by_index: Dict[str, Dict[int, TransportSession]] = {}
        self.frames_sent = 0
        self.frames_lost = 0

    def random_bytes(self, n: int) -> bytes:
        """Deterministic randomness for everything living on this fabric."""
        return self.rng.getrandbits(8 * n).to_bytes(n, "little")

    @property
    def header_bytes(self) -> int:
        return self.settings.underlay_header_bytes

    def wire_bytes(self, payload_len: int) -> int:
        return payload_len + self.header_bytes

    def payload_mtu(self, node_id: str, interface: str) -> int:
        """Largest datagram node_id may send on interface; a site tunnel eats into the underlay MTU."""
        link = self.node(node_id).interfaces.get(interface)
        if link is not None and link.intersite and link.site_tunnel:
            return self.settings.underlay_mtu - TRANSPORT_OVERHEAD
        return self.settings.underlay_mtu

    # -- topology ---------------------------------------------------------------------------

    def add_site(self, site_id: str, fabric_mbps: Optional[float] = None) -> Site:
        if site_id in self.sites:
            raise DuplicateSite(f"site '{site_id}' already exists")
        site = Site(
            id=site_id,
            backplane=FairQueue(self.env),
            fabric_mbps=fabric_mbps or self.settings.site_fabric_mbps,
        )
        self.sites[site_id] = site
        self._site_by_index[site_id] = {}
        logger.info(f"Site {site_id} added (backplane {site.fabric_mbps} Mbps)")
        return site

    def site(self, site_id: str) -> Site:
        try:
            return self.sites[site_id]
        except KeyError:
            raise UnknownNode(f"unknown site '{site_id}'") from None

    def add_node(self, node_id: str, site_id: str, vcpus: float) -> EmuNode:
        site = self.site(site_id)
        if node_id in self.nodes:
            raise ValueError(f"node '{node_id}' already exists")
        node = EmuNode(
            self.env, node_id, site_id, vcpus,
            self.settings.per_vcpu_rate_mbps, self.settings.crypto_rate_mbps,
        )
        self.nodes[node_id] = node
        site.nodes.append(node_id)
        logger.debug(f"Node {node_id} on {site_id}: {vcpus} vCPU, {node.processing_rate_mbps} Mbps")
        return node

    def node(self, node_id: str) -> EmuNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(f"unknown node '{node_id}'") from None

    def remove_node(self, node_id: str) -> None:
        node = self.nodes.pop(node_id, None)
        if node is None:
            return
        self.sites[node.site].nodes.remove(node_id)
        for address in [a for a, n in self._addresses.items() if n == node_id]:
            del self._addresses[address]
        node.interfaces.clear()
        node.handler = None

    def bind_address(self, address: str, node_id: str) -> None:
        ipaddress.ip_address(address)
        self.node(node_id)
        owner = self._addresses.get(address)
        if owner is not None and owner != node_id:
            raise ValueError(f"address {address} is already bound to {owner}")
        self._addresses[address] = node_id

    def node_for_address(self, address: str) -> EmuNode:
        node_id = self._addresses.get(address)
        if node_id is None:
            raise NoRoute(f"no node owns address {address}")
        return self.nodes[node_id]

    def add_link(
        self,
        link_id: str,
        node_a: str,
        node_b: str,
        capacity_mbps: Optional[float] = None,
        delay_ms: Optional[float] = None,
        jitter_ms: float = 0.0,
        loss_prob: float = 0.0,
    ) -> EmuLink:
        a, b = self.node(node_a), self.node(node_b)
        if a.site != b.site:
            raise NoRoute(f"{node_a} and {node_b} are on different sites; use the intersite link")
        if link_id in self.links:
            raise ValueError(f"link '{link_id}' already exists")
        link = EmuLink(
            self.env, link_id, (node_a, node_b),
            capacity_mbps if capacity_mbps is not None else self.settings.intra_site_capacity_mbps,
            delay_ms if delay_ms is not None else self.settings.intra_site_delay_ms,
            jitter_ms, loss_prob, random.Random(self.rng.random()),
        )
        self.links[link_id] = link
        return link

    def remove_link(self, link_id: str) -> None:
        link = self.links.pop(link_id, None)
        if link is None:
            return
        for node in self.nodes.values():
            for iface in [i for i, l in node.interfaces.items() if l is link]:
                node.detach(iface)

    def link(self, link_id: str) -> EmuLink:
        try:
            return self.links[link_id]
        except KeyError:
            raise UnknownNode(f"unknown link '{link_id}'") from None

    def connect(self, node_id: str, interface: str, link: EmuLink) -> None:
        self.node(node_id).attach(interface, link)

    def intersite_link(self, site_a: str, site_b: str) -> Optional[IntersiteLink]:
        return self._intersite.get(frozenset((site_a, site_b)))

    def configure_intersite(
        self,
        site_a: str,
        site_b: str,
        capacity_mbps: float,
        delay_ms: float,
        site_tunnel: bool = False,
        jitter_ms: float = 0.0,
        loss_prob: float = 0.0,
    ) -> IntersiteLink:
        self.site(site_a)
        self.site(site_b)
        key = frozenset((site_a, site_b))
        if key in self._intersite:
            raise DuplicateIntersiteLink(f"{site_a} and {site_b} are already joined")
        link = IntersiteLink(
            self.env, f"{site_a}<->{site_b}", (site_a, site_b), capacity_mbps, delay_ms,
            jitter_ms, loss_prob, random.Random(self.rng.random()), site_tunnel=site_tunnel,
        )
        self._intersite[key] = link
        self.links[link.id] = link
        if site_tunnel:
            for site_id in (site_a, site_b):
                site = self.sites[site_id]
                if site.gateway is None:
                    site.gateway = EmuNode(
                        self.env, f"{site_id}-gw", site_id, self.settings.gateway_vcpus,
                        self.settings.per_vcpu_rate_mbps, self.settings.crypto_rate_mbps,
                    )
            self._site_handshake(site_a, site_b)
        logger.info(
            f"Intersite link {link.id}: {capacity_mbps} Mbps, {delay_ms} ms, site tunnel {'on' if site_tunnel else 'off'}"
        )
        return link

    def set_class_weight(self, qos_class: str, weight: float) -> None:
        """Apply a QoS class weight on the shared resources: backplanes and intersite links."""
        for site in self.sites.values():
            site.backplane.weights[qos_class] = weight
        for link in self._intersite.values():
            link.set_weight(qos_class, weight)

    def attach_tap(self, link_id: str) -> Tap:
        link = self.link(link_id)
        tap = Tap(link_id)
        link.taps.append(tap)
        return tap

    # -- site tunnels -------------------------------------------------------------------------

    def _site_policy(self) -> RekeyPolicy:
        s = self.settings
        return RekeyPolicy(s.rekey_after_s, s.reject_after_s, s.rekey_after_messages)

    def _site_handshake(self, site_a: str, site_b: str) -> None:
        clock = self.clock.seconds
        key_a, key_b = generate_keypair(self.random_bytes), generate_keypair(self.random_bytes)
        state, init = initiate(key_a, key_b.public, clock=clock, rng=self.random_bytes)
        response, session_b = respond(key_b, bytes(32), init, clock=clock, rng=self.random_bytes,
                                      policy=self._site_policy())
        session_a = finalize(state, response, self._site_policy())
        key = frozenset((site_a, site_b))
        # the previous pair still opens frames in flight; the one before it is forgotten
        for site_id, retired in self._site_previous.pop(key, {}).items():
            self._site_by_index[site_id].pop(retired.local_index, None)
        if key in self._site_sessions:
            self._site_previous[key] = self._site_sessions[key]
        self._site_sessions[key] = {site_a: session_a, site_b: session_b}
        self._site_by_index[site_a][session_a.local_index] = session_a
        self._site_by_index[site_b][session_b.local_index] = session_b
        logger.info(f"Site tunnel {site_a}<->{site_b} keyed")

    def site_session(self, site_id: str, peer_site: str) -> TransportSession:
        """The current site-tunnel session of site_id towards peer_site."""
        try:
            return self._site_sessions[frozenset((site_id, peer_site))][site_id]
        except KeyError:
            raise NoRoute(f"no site tunnel between {site_id} and {peer_site}") from None

    def _site_seal(self, src_site: str, dst_site: str, payload: bytes) -> bytes:
        session = self.site_session(src_site, dst_site)
        if rekey_status(session, self.clock.seconds()) is not RekeyStatus.FRESH:
            self._site_handshake(src_site, dst_site)
            session = self.site_session(src_site, dst_site)
        return session.seal(payload).encode()

    def _site_open(self, dst_site: str, frame: bytes) -> bytes:
        transport = decode_frame(frame)
        session = self._site_by_index[dst_site].get(transport.receiver_index)
        if session is None:
            raise NoRoute(f"site {dst_site} has no session {transport.receiver_index:#010x}")
        return session.open(transport)

    def peek_site_layer(self, dst_site: str, frame: bytes) -> bytes:
        """Decrypt the outer layer of a captured intersite frame without consuming its counter."""
        transport = decode_frame(frame)
        session = self._site_by_index[dst_site].get(transport.receiver_index)
        if session is None:
            raise NoRoute(f"site {dst_site} has no session {transport.receiver_index:#010x}")
        return session.peek(transport)

    # -- data path ----------------------------------------------------------------------------

    def crypto_surcharge_us(self, src_id: str, dst_id: str, frame_len: int) -> float:
        """Seal cost on src plus open cost on dst for one sealed frame of frame_len bytes."""
        wire = self.wire_bytes(frame_len)
        return self.node(src_id).crypto_us(wire) + self.node(dst_id).crypto_us(wire)

    def _route(self, src: EmuNode, interface: str, dst: EmuNode) -> Tuple[EmuLink, str]:
        link = src.interfaces.get(interface)
        if link is None:
            raise NoRoute(f"{src.id} has no link on interface {interface}")
        if link.intersite:
            if src.site == dst.site or {src.site, dst.site} != set(link.endpoints):
                raise NoRoute(f"{link.id} does not lead from {src.id} to {dst.id}")
        elif src.id not in link.endpoints or link.other_end(src.id) != dst.id:
            raise NoRoute(f"{link.id} does not lead from {src.id} to {dst.id}")
        if dst.interfaces.get(interface) is link:
            dst_iface: Optional[str] = interface
        else:
            dst_iface = next((name for name, l in dst.interfaces.items() if l is link), None)
        if dst_iface is None:
            raise NoRoute(f"{dst.id} is not attached to {link.id}")
        return link, dst_iface

    def send(
        self,
        src_id: str,
        interface: str,
        dst_id: str,
        payload: bytes,
        qos_class: str = DEFAULT_CLASS,
        sealed: bool = False,
    ) -> simpy.Process:
        """
        Emit one datagram. The returned process resolves to the delivery time in microseconds,
        or None when the frame was lost. sealed marks a tunnel transport frame whose crypto
        cost is charged to both ends.
        """
        src, dst = self.node(src_id), self.node(dst_id)
        link, dst_iface = self._route(src, interface, dst)
        outer = len(payload) + (TRANSPORT_OVERHEAD if link.intersite and link.site_tunnel else 0)
        if outer > self.settings.underlay_mtu:
            raise FrameTooLarge(f"{outer}-byte frame exceeds the {self.settings.underlay_mtu}-byte MTU")
        self.frames_sent += 1
        return self.env.process(self._carry(src, dst, dst_iface, link, bytes(payload), qos_class, sealed))

    def _carry(self, src: EmuNode, dst: EmuNode, dst_iface: str, link: EmuLink,
               payload: bytes, qos_class: str, sealed: bool):
        wire = self.wire_bytes(len(payload))
        cpu_us = src.processing_us(wire) + (src.crypto_us(wire) if sealed else 0.0)
        yield src.cpu.submit(cpu_us, qos_class)

        frame = payload
        tunneled = link.intersite and link.site_tunnel
        if link.intersite:
            from_end = src.site
            if tunneled:
                frame = self._site_seal(src.site, dst.site, payload)
                gateway = self.sites[src.site].gateway
                yield gateway.cpu.submit(gateway.crypto_us(self.wire_bytes(len(frame))), qos_class)
        else:
            from_end = src.id

        yield link.transmit(from_end, self.wire_bytes(len(frame)), qos_class)
        link.sent_bytes += len(frame)
        link.record(src.id, dst.id, frame)
        if not link.intersite:
            site = self.sites[src.site]
            yield site.backplane.submit(wire * 8 / site.fabric_mbps, qos_class)

        delay_us = link.propagate(from_end)
        if delay_us is None:
            self.frames_lost += 1
            logger.debug(f"Frame {src.id}->{dst.id} lost on {link.id}")
            return None
        if delay_us:
            yield self.env.timeout(delay_us)

        if tunneled:
            gateway = self.sites[dst.site].gateway
            yield gateway.cpu.submit(gateway.crypto_us(self.wire_bytes(len(frame))), qos_class)
            payload = self._site_open(dst.site, frame)
        if sealed:
            yield dst.cpu.submit(dst.crypto_us(wire), qos_class)

        link.delivered_bytes += len(payload)
        if dst.id in self.nodes:
            dst.deliver(dst_iface, src.id, payload)
        return self.env.now
