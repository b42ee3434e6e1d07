"""
Lifecycle engine: sites, catalog, NS/NSI instantiation with Day-0/1/2 phases, automatic peering
over relations and endpoint resolution across sites.
"""
import hashlib
import ipaddress
import logging
import os
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

from pydantic import BaseModel

from config import Settings, get_settings
from descriptors.models import DescriptorPackage, LinkEndpoint, Nsd, Nst, VirtualLink, Vnfd
from descriptors.parser import load_package, serialize
from descriptors.validation import validate_package
from netem.fabric import Fabric
from netem.link import DEFAULT_CLASS, IntersiteLink
from netem.tap import Tap, scan_tap

from .charms import EpsCharm
from .charms.base import Charm
from .errors import (
    ActionFailed,
    Day1Failure,
    DuplicateSite,
    InsufficientResources,
    NotReady,
    OrchestratorError,
    PeeringTimeout,
    UnknownAction,
    UnknownNs,
    UnknownUnit,
    ValidationFailed,
)
from .records import NsiInstance, NsInstance, NsPhase
from .relations import RelationBus
from .unit import RelationBinding, Unit, UnitProxy
from .vim import RESOURCES, SiteConfig, VimHandle

logger = logging.getLogger(__name__)


class CatalogEntry(BaseModel):
    kind: str
    id: str
    version: int
    digest: str


class Orchestrator:
    """
    Single logical event loop over one emulated fabric. Lifecycle calls are synchronous: they
    run the virtual clock until the requested state is reached or a timeout fires.
    """

    def __init__(
        self,
        settings: Optional[Settings] = None,
        fabric: Optional[Fabric] = None,
        seed: Optional[int] = None,
        charm: Optional[Charm] = None,
        capture: bool = False,
    ):
        self.settings = settings or get_settings()
        seed = self.settings.default_seed if seed is None else seed
        self.fabric = fabric or Fabric(self.settings, seed=seed)
        self.clock = self.fabric.clock
        self.bus = RelationBus()
        self.charm = charm or EpsCharm()
        self.capture = capture
        self.vims: Dict[str, VimHandle] = {}
        self.package = DescriptorPackage()
        self.catalog: Dict[str, CatalogEntry] = {}
        self.instances: Dict[str, NsInstance] = {}
        self.slices: Dict[str, NsiInstance] = {}
        self.taps: Dict[str, List[Tap]] = {}
        self._ns_seq = 0
        self._nsi_seq = 0
        self._subnets: Iterator[ipaddress.IPv4Network] = ipaddress.ip_network(self.settings.tunnel_pool).subnets(new_prefix=24)
        self._free_subnets: List[ipaddress.IPv4Network] = []

    # -- sites ------------------------------------------------------------------------------

    def register_vim(self, config: Union[SiteConfig, Mapping[str, Any]]) -> VimHandle:
        if not isinstance(config, SiteConfig):
            config = SiteConfig(**config)
        if config.id in self.vims:
            raise DuplicateSite(f"site '{config.id}' is already registered")
        self.fabric.add_site(config.id, config.fabric_mbps)
        vim = VimHandle(config)
        self.vims[config.id] = vim
        logger.info(f"VIM {config.id} registered: {config.vcpus:g} vCPU / {config.ram_gb:g} GB / {config.storage_gb:g} GB")
        return vim

    def configure_intersite(self, site_a: str, site_b: str, capacity_mbps: float, delay_ms: float,
                            site_tunnel: bool = True) -> IntersiteLink:
        return self.fabric.configure_intersite(site_a, site_b, capacity_mbps, delay_ms, site_tunnel=site_tunnel)

    def vim(self, site_id: str) -> VimHandle:
        try:
            return self.vims[site_id]
        except KeyError:
            raise OrchestratorError(f"unknown site '{site_id}'") from None

    # -- catalog ----------------------------------------------------------------------------

    def validate(self, package: DescriptorPackage) -> list:
        """Findings for package resolved against what is already onboarded."""
        merged = DescriptorPackage(
            vnfds={**self.package.vnfds, **package.vnfds},
            nsds={**self.package.nsds, **package.nsds},
            nsts={**self.package.nsts, **package.nsts},
        )
        return validate_package(merged, handles_relation=self.charm.handles_relation)

    def onboard(self, package: Union[DescriptorPackage, str, os.PathLike]) -> List[CatalogEntry]:
        if not isinstance(package, DescriptorPackage):
            package = load_package(package)
        findings = self.validate(package)
        if findings:
            raise ValidationFailed(findings)
        entries = []
        for kind, documents in (("vnfd", package.vnfds), ("nsd", package.nsds), ("nst", package.nsts)):
            for doc_id, document in documents.items():
                entries.append(self._store(kind, doc_id, document))
        self.package.vnfds.update(package.vnfds)
        self.package.nsds.update(package.nsds)
        self.package.nsts.update(package.nsts)
        logger.info(f"Onboarded {len(entries)} descriptor(s)")
        return entries

    def _store(self, kind: str, doc_id: str, document: BaseModel) -> CatalogEntry:
        digest = hashlib.sha256(serialize(document).encode()).hexdigest()
        key = f"{kind}:{doc_id}"
        current = self.catalog.get(key)
        if current is not None and current.digest == digest:
            return current
        entry = CatalogEntry(kind=kind, id=doc_id, version=current.version + 1 if current else 1, digest=digest)
        self.catalog[key] = entry
        return entry

    def _nsd(self, nsd_id: str) -> Nsd:
        nsd = self.package.nsds.get(nsd_id)
        if nsd is None:
            raise UnknownNs(f"nsd '{nsd_id}' is not onboarded")
        return nsd

    def _nst(self, nst_id: str) -> Nst:
        nst = self.package.nsts.get(nst_id)
        if nst is None:
            raise UnknownNs(f"nst '{nst_id}' is not onboarded")
        return nst

    # -- lookups ----------------------------------------------------------------------------

    def ns(self, ns_id: str) -> NsInstance:
        """An NS instance by id; a slice id resolves to its underlying NS."""
        if ns_id in self.instances:
            return self.instances[ns_id]
        if ns_id in self.slices:
            return self.slices[ns_id].ns
        raise UnknownNs(f"no network service '{ns_id}'")

    def nsi(self, nsi_id: str) -> NsiInstance:
        try:
            return self.slices[nsi_id]
        except KeyError:
            raise UnknownNs(f"no slice instance '{nsi_id}'") from None

    def _unit(self, unit_id: str) -> Unit:
        for ns in self.instances.values():
            if unit_id in ns.units and not ns.released:
                return ns.units[unit_id]
        raise UnknownUnit(f"no unit '{unit_id}'")

    def resolve_endpoint(self, unit_id: str, requesting_site: str, interface: Optional[str] = None) -> Tuple[str, int]:
        """
        Address and listening port under which unit_id is reachable from requesting_site.
        Units on the same site use internal addresses; other sites get the floating address.
        """
        unit = self._unit(unit_id)
        address = unit.internal_address if unit.site == requesting_site else unit.floating_address
        device = unit.devices.get(interface) if interface else None
        if device is None and unit.devices:
            device = next(iter(unit.devices.values()))
        port = device.listen_port if device is not None else self.settings.base_listen_port
        return address, port

    # -- day 0 ------------------------------------------------------------------------------

    def _allocate_subnet(self) -> ipaddress.IPv4Network:
        if self._free_subnets:
            return self._free_subnets.pop(0)
        try:
            return next(self._subnets)
        except StopIteration:
            raise InsufficientResources(f"tunnel pool {self.settings.tunnel_pool} is exhausted") from None

    @staticmethod
    def _peering(link: VirtualLink, a: Unit, ea: LinkEndpoint, b: Unit, eb: LinkEndpoint) -> Optional[Tuple[str, Unit, Unit]]:
        """(relation name, requirer, provider) declared for the two ends of a link, if any."""
        for unit, end, other in ((a, ea, b), (b, eb, a)):
            for relation in unit.vnfd.relations:
                if relation.bound_interface == end.interface and relation.counterpart_vnfd == other.vnfd.id:
                    if relation.role == "requirer":
                        return relation.name, unit, other
                    return relation.name, other, unit
        return None

    def create_ns(
        self,
        nsd_id: str,
        placement: Optional[Mapping[str, str]] = None,
        wireguard: bool = True,
        flavor_multiplier: Optional[float] = None,
        qos_class: str = DEFAULT_CLASS,
        untunneled_links: Iterable[str] = (),
    ) -> NsInstance:
        """Day-0: reserve resources, create units with cloud-init applied and wire the virtual links."""
        nsd = self._nsd(nsd_id)
        multiplier = flavor_multiplier if flavor_multiplier is not None else nsd.flavor_multiplier
        if multiplier < 1:
            raise ValueError("flavor multiplier must be at least 1")
        if not self.vims:
            raise OrchestratorError("no VIM registered")
        placement = dict(placement or {})
        members = [ref.member_index for ref in nsd.vnf_refs]
        unknown = sorted(set(placement) - set(members))
        if unknown:
            raise UnknownUnit(f"placement names unknown member(s): {', '.join(unknown)}")
        default_site = next(iter(self.vims))
        placement = {m: placement.get(m, default_site) for m in members}

        vnfds: Dict[str, Vnfd] = {ref.member_index: self.package.vnfds[ref.vnfd_id] for ref in nsd.vnf_refs}
        demand: Dict[str, Dict[str, float]] = {}
        for member, site in placement.items():
            need = vnfds[member].resources(multiplier)
            total = demand.setdefault(site, {r: 0.0 for r in RESOURCES})
            for r in RESOURCES:
                total[r] += need[r]
        for site, need in demand.items():
            self.vim(site).check(need)

        self._ns_seq += 1
        ns = NsInstance(
            id=f"ns{self._ns_seq}", nsd_id=nsd.id, placement=placement, wireguard=wireguard,
            flavor_multiplier=multiplier, qos_class=qos_class,
        )
        self.instances[ns.id] = ns
        try:
            self._create_units(ns, vnfds, multiplier, wireguard)
            self._wire_links(ns, nsd, wireguard, set(untunneled_links))
        except Exception as e:
            ns.phase = NsPhase.FAILED
            ns.failure = str(e)
            logger.error(f"{ns.id}: day-0 failed: {e}")
            self._release(ns)
            raise
        logger.info(f"{ns.id}: day-0 done for {nsd.id} (wireguard {'on' if wireguard else 'off'}, x{multiplier:g})")
        return ns

    def _create_units(self, ns: NsInstance, vnfds: Dict[str, Vnfd], multiplier: float, wireguard: bool) -> None:
        for member, vnfd in vnfds.items():
            unit_id = f"{ns.id}-{member}"
            site = ns.placement[member]
            vim = self.vims[site]
            resources = vnfd.resources(multiplier)
            vim.allocate(unit_id, resources)
            node = self.fabric.add_node(unit_id, site, resources["vcpus"])
            unit = Unit(unit_id, member, vnfd, site, node, self.fabric, self.bus, self.settings, ns.qos_class)
            ns.units[unit_id] = unit
            vim.assign_addresses(unit_id)
            unit.internal_address = vim.internal[unit_id]
            unit.floating_address = vim.floating[unit_id]
            self.fabric.bind_address(unit.internal_address, unit_id)
            self.fabric.bind_address(unit.floating_address, unit_id)
            unit.apply_day0(wireguard)
            self.bus.register_unit(unit_id)
            ns.proxies[unit_id] = UnitProxy(unit, self.charm)

    def _wire_links(self, ns: NsInstance, nsd: Nsd, wireguard: bool, untunneled: set) -> None:
        by_member = {u.member_index: u for u in ns.units.values()}
        for link in nsd.virtual_links:
            ea, eb = link.endpoints
            a, b = by_member[ea.member_index], by_member[eb.member_index]
            if a.site == b.site:
                emu = self.fabric.add_link(f"{ns.id}/{link.name}", a.id, b.id, link.capacity_mbps, link.delay_ms)
            else:
                emu = self.fabric.intersite_link(a.site, b.site)
                if emu is None:
                    raise OrchestratorError(f"link {link.name} spans {a.site} and {b.site} but they are not joined")
            if self.capture:
                self.taps.setdefault(ns.id, []).append(self.fabric.attach_tap(emu.id))
            self.fabric.connect(a.id, ea.interface, emu)
            self.fabric.connect(b.id, eb.interface, emu)
            a.counterparts[ea.interface] = b.id
            b.counterparts[eb.interface] = a.id
            ns.links[link.name] = emu.id

            peering = self._peering(link, a, ea, b, eb)
            requirer, provider = (peering[1], peering[2]) if peering else (a, b)
            ns.directions[link.name] = (requirer.id, provider.id)
            tunneled = wireguard and link.tunneled and link.name not in untunneled
            if not tunneled:
                continue
            a.tunneled.add(ea.interface)
            b.tunneled.add(eb.interface)
            if peering is None:
                continue
            name = peering[0]
            subnet = self._allocate_subnet()
            ns.tunnel_subnets.append(str(subnet))
            relation = self.bus.create_relation(name, provider.id, requirer.id)
            ns.relations.append(relation.id)
            provider_address = str(subnet.network_address + 1)
            requirer_address = str(subnet.network_address + 2)
            iface = {a.id: ea.interface, b.id: eb.interface}
            provider.bindings.append(RelationBinding(
                relation.id, name, "provider", iface[provider.id], requirer.id,
                str(subnet), provider_address, requirer_address,
            ))
            requirer.bindings.append(RelationBinding(
                relation.id, name, "requirer", iface[requirer.id], provider.id,
                str(subnet), requirer_address, provider_address,
            ))

    # -- day 1 ------------------------------------------------------------------------------

    def run_day1(self, ns_id: str) -> NsInstance:
        """Run every unit's Day-1 primitives in VNFD order, then wait for all tunnels."""
        ns = self.ns(ns_id)
        if ns.phase is NsPhase.READY:
            return ns
        if ns.phase is not NsPhase.DAY0:
            raise NotReady(f"{ns.id} is {ns.phase.value}, day-1 needs day0")
        ns.phase = NsPhase.DAY1
        try:
            for unit in ns.units.values():
                for ref in unit.vnfd.day1_primitives:
                    try:
                        ns.proxies[unit.id].execute(ref.name, ref.params)
                    except Exception as e:
                        raise Day1Failure(unit.id, ref.name, str(e)) from e
                    self._inject_endpoints(ns, unit)
                    self._drain(ns)
            self._settle(ns, strict=True)
        except (Day1Failure, PeeringTimeout) as e:
            ns.phase = NsPhase.FAILED
            ns.failure = str(e)
            logger.error(f"{ns.id}: {e}")
            raise
        ns.phase = NsPhase.READY
        logger.info(f"{ns.id}: ready with {len(ns.tunnel_registry)} tunneled link(s)")
        return ns

    def instantiate_ns(
        self,
        nsd_id: str,
        placement: Optional[Mapping[str, str]] = None,
        wireguard: bool = True,
        flavor_multiplier: Optional[float] = None,
        qos_class: str = DEFAULT_CLASS,
        untunneled_links: Iterable[str] = (),
    ) -> NsInstance:
        ns = self.create_ns(nsd_id, placement, wireguard, flavor_multiplier, qos_class, untunneled_links)
        return self.run_day1(ns.id)

    def instantiate_nsi(
        self,
        nst_id: str,
        placement: Optional[Mapping[str, str]] = None,
        flavor_multiplier: Optional[float] = None,
    ) -> NsiInstance:
        nst = self._nst(nst_id)
        self._nsi_seq += 1
        nsi_id = f"nsi{self._nsi_seq}"
        self.fabric.set_class_weight(nsi_id, nst.qos.weight)
        ns = self.instantiate_ns(nst.nsd_ref, placement, wireguard=True,
                                 flavor_multiplier=flavor_multiplier, qos_class=nsi_id)
        if nst.slice_type == "urllc":
            kpi = {"latency_ms": self.settings.urllc_latency_ms}
        else:
            kpi = {"dl_mbps": self.settings.embb_dl_mbps}
        exposed = {
            f"{unit.id}/{iface}": unit.mgmt_address
            for unit in ns.units.values()
            for iface in nst.exposed_interfaces
            if iface == unit.vnfd.mgmt_interface
        }
        nsi = NsiInstance(id=nsi_id, nst_id=nst.id, slice_type=nst.slice_type, ns=ns, qos=nst.qos,
                          kpi=kpi, exposed=exposed)
        self.slices[nsi_id] = nsi
        logger.info(f"{nsi_id}: {nst.slice_type} slice on {ns.id} (5QI {nst.qos.five_qi}, weight {nst.qos.weight:g})")
        return nsi

    # -- relation plumbing ------------------------------------------------------------------

    def _inject_endpoints(self, ns: NsInstance, unit: Unit) -> None:
        """Publish endpoint_host on the unit's behalf, as seen from each counterpart's site."""
        for binding in unit.bindings:
            relation = self.bus.relation(binding.relation_id)
            if unit.id not in relation.joined:
                continue
            counterpart = ns.units[binding.counterpart]
            host, _ = self.resolve_endpoint(unit.id, counterpart.site, binding.interface)
            if self.bus.read_own(binding.relation_id, unit.id).get("endpoint_host") != host:
                self.bus.publish(binding.relation_id, unit.id, {"endpoint_host": host})

    def _drain(self, ns: NsInstance) -> int:
        handled = 0
        progressed = True
        while progressed:
            progressed = False
            for unit in ns.units.values():
                while True:
                    event = self.bus.next_event(unit.id)
                    if event is None:
                        break
                    progressed = True
                    handled += 1
                    self.charm.handle_event(unit, event)
        return handled

    def _requirer_pairs(self, ns: NsInstance) -> Iterator[Tuple[RelationBinding, Unit, Unit]]:
        for unit in ns.units.values():
            for binding in unit.bindings:
                if binding.role == "requirer":
                    yield binding, unit, ns.units[binding.counterpart]

    def _kick(self, ns: NsInstance) -> None:
        for binding, requirer, provider in self._requirer_pairs(ns):
            device = requirer.devices.get(binding.interface)
            if device is None or provider.id not in device.peers:
                continue
            if device.session(provider.id) is None and not device.handshaking(provider.id):
                device.connect(provider.id)

    def _unsettled(self, ns: NsInstance, strict: bool) -> List[str]:
        missing = []
        for binding, requirer, provider in self._requirer_pairs(ns):
            provider_binding = provider.binding(binding.relation_id)
            ours = requirer.devices.get(binding.interface)
            theirs = provider.devices.get(provider_binding.interface) if provider_binding else None
            if ours is None or theirs is None:
                if strict:
                    missing.append(binding.relation_id)
                continue
            if not strict and (provider.id not in ours.peers or requirer.id not in theirs.peers):
                continue
            if ours.session(provider.id) is None or theirs.session(requirer.id) is None:
                missing.append(binding.relation_id)
        return missing

    def _settle(self, ns: NsInstance, strict: bool, awaiting: Iterable[Tuple[Unit, str, str]] = ()) -> None:
        """Run the clock until every peering relation has live sessions on both sides."""
        awaiting = list(awaiting)
        self._kick(ns)
        timeout_s = self.settings.peering_timeout_s
        deadline = self.clock.now_us + timeout_s * 1e6
        env = self.clock.env
        while True:
            missing = self._unsettled(ns, strict)
            for unit, iface, peer in awaiting:
                device = unit.devices.get(iface)
                if device is None or device.session(peer) is None:
                    missing.append(f"{unit.id}/{iface}->{peer}")
            if not missing:
                return
            if env.peek() > deadline:
                self.clock.advance(max(0.0, deadline - self.clock.now_us))
                raise PeeringTimeout(missing, timeout_s)
            env.step()

    # -- day 2 ------------------------------------------------------------------------------

    def run_action(self, ns_id: str, unit_ref: str, action: str,
                   params: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
        ns = self.ns(ns_id)
        if ns.phase is not NsPhase.READY:
            raise NotReady(f"{ns.id} is {ns.phase.value}, not ready")
        unit = ns.unit(unit_ref)
        if unit is None:
            raise UnknownUnit(f"{ns.id} has no unit '{unit_ref}'")
        if action not in [ref.name for ref in unit.vnfd.day2_primitives]:
            raise UnknownAction(f"'{action}' is not a day-2 action of {unit.vnfd.id}")
        result = ns.proxies[unit.id].execute(action, params)
        awaiting = [(unit, iface, peer) for iface, peer in result.pop("awaiting", [])]
        self._inject_endpoints(ns, unit)
        self._drain(ns)
        try:
            self._settle(ns, strict=False, awaiting=awaiting)
        except PeeringTimeout as e:
            raise ActionFailed(str(e)) from e
        logger.info(f"{ns.id}: {action} on {unit.id} done")
        return result

    # -- capture ----------------------------------------------------------------------------

    def tap_scan(self, ns_id: str, needle: Union[str, bytes], site_view: bool = False) -> Dict[str, int]:
        """
        Needle matches per captured link of an NS. With site_view the site-tunnel layer of
        intersite frames is peeled first, which is what an operator inside either site observes.
        """
        ns = self.ns(ns_id)
        taps = self.taps.get(ns.id)
        if not taps:
            raise OrchestratorError(f"no capture on {ns.id}; start the orchestrator with capture on")
        if isinstance(needle, str):
            needle = needle.encode()
        counts: Dict[str, int] = {}
        for tap in taps:
            link = self.fabric.links.get(tap.link_id)
            if site_view and isinstance(link, IntersiteLink) and link.site_tunnel:
                hits = sum(
                    1 for rec in tap.records
                    if needle in self.fabric.peek_site_layer(self.fabric.node(rec.dst).site, rec.payload)
                )
            else:
                hits = scan_tap(tap, needle)
            counts[tap.link_id] = counts.get(tap.link_id, 0) + hits
        return counts

    # -- termination ------------------------------------------------------------------------

    def terminate(self, ns_id: str) -> NsPhase:
        """Destroy sessions, detach links and release resources. Terminating twice is a no-op."""
        ns = self.ns(ns_id)
        if ns.phase is NsPhase.TERMINATED:
            return ns.phase
        for relation_id in ns.relations:
            self.bus.depart(relation_id)
        self._release(ns)
        ns.phase = NsPhase.TERMINATED
        logger.info(f"{ns.id}: terminated")
        return ns.phase

    def _release(self, ns: NsInstance) -> None:
        if ns.released:
            return
        for tap in self.taps.pop(ns.id, []):
            tap.detach()
        for unit in ns.units.values():
            unit.teardown()
            self.bus.unregister_unit(unit.id)
        for link_id in ns.links.values():
            link = self.fabric.links.get(link_id)
            if link is not None and not link.intersite:
                self.fabric.remove_link(link_id)
        for unit in ns.units.values():
            self.fabric.remove_node(unit.id)
            self.vims[unit.site].release(unit.id)
        for subnet in ns.tunnel_subnets:
            self._free_subnets.append(ipaddress.ip_network(subnet))
        ns.released = True

    def describe(self) -> Dict[str, Any]:
        return {
            "sites": {site: vim.describe() for site, vim in self.vims.items()},
            "catalog": {key: entry.model_dump() for key, entry in sorted(self.catalog.items())},
            "instances": {ns_id: ns.describe() for ns_id, ns in self.instances.items()},
            "slices": {nsi_id: nsi.describe() for nsi_id, nsi in self.slices.items()},
        }
