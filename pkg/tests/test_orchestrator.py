import json

import pytest

from config import Settings
from descriptors.parser import load_package
from eps.functions import attach
from eps.subscribers import DEFAULT_IMSI, DEFAULT_REALM
from orchestrator.charms import EpsCharm
from orchestrator.engine import Orchestrator
from orchestrator.errors import (ActionFailed, Day1Failure, InsufficientResources, NotReady, OrchestratorError,
                                 PeeringTimeout, UnknownAction, UnknownNs, UnknownUnit, ValidationFailed)
from orchestrator.handler import register_lab
from orchestrator.records import NsPhase
from orchestrator.relations import PEERING_KEYS, RelationState
from tests.conftest import EPS_PACKAGE
from tunnel.keys import decode_key

TUNNELED = ("S1-C", "S1-U", "S6a", "S11", "Sx")


def _attach(ns):
    return attach(ns.unit("ue").app, ns.unit("mme").app)


# -- catalog ----------------------------------------------------------------------------------

def test_onboard_versions_documents():
    orch = register_lab(Orchestrator(settings=Settings(), seed=1))
    entries = orch.onboard(EPS_PACKAGE)
    assert sorted(f"{e.kind}:{e.id}" for e in entries) == [
        "nsd:oai-eps", "nst:embb", "nst:urllc",
        "vnfd:enb", "vnfd:hss", "vnfd:mme", "vnfd:spgwc", "vnfd:spgwu", "vnfd:ue",
    ]
    assert {e.version for e in entries} == {1}
    assert {e.version for e in orch.onboard(EPS_PACKAGE)} == {1}

    package = load_package(EPS_PACKAGE)
    package.nsts["urllc"] = package.nsts["urllc"].model_copy(update={"description": "changed"})
    orch.onboard(package)
    assert orch.catalog["nst:urllc"].version == 2
    assert orch.catalog["nst:embb"].version == 1


def test_onboard_rejects_invalid_package():
    orch = register_lab(Orchestrator(settings=Settings(), seed=1))
    package = load_package(EPS_PACKAGE)
    package.nsts["embb"] = package.nsts["embb"].model_copy(update={"nsd_ref": "missing"})
    with pytest.raises(ValidationFailed) as info:
        orch.onboard(package)
    assert [f.code for f in info.value.findings] == ["unknown-nsd"]
    assert orch.catalog == {}


def test_unknown_nsd(testbed):
    with pytest.raises(UnknownNs):
        testbed.instantiate_ns("no-such-nsd")
    with pytest.raises(UnknownNs):
        testbed.ns("ns42")


# -- day 0 / day 1 ----------------------------------------------------------------------------

def test_instantiate_with_wireguard(testbed):
    ns = testbed.instantiate_ns("oai-eps")
    assert ns.phase is NsPhase.READY
    assert len(ns.relations) == 5
    assert all(testbed.bus.relation(r).state is RelationState.JOINED_BOTH for r in ns.relations)
    registry = ns.tunnel_registry
    assert sorted(registry) == sorted(TUNNELED)
    for link in TUNNELED:
        assert len(registry[link]) == 2
    assert "Uu" not in registry
    assert ns.directions["S6a"] == (f"{ns.id}-mme", f"{ns.id}-hss")
    assert "wireguard" in ns.unit("hss").day0.packages
    assert len(ns.tunnel_subnets) == 5


def test_relation_bags_carry_only_public_data(testbed):
    ns = testbed.instantiate_ns("oai-eps")
    bags = testbed.bus.bags()
    for relation_id in ns.relations:
        for unit_id, bag in bags[relation_id].items():
            assert set(bag.entries) == set(PEERING_KEYS)
            unit = ns.units[unit_id]
            binding = unit.binding(relation_id)
            device = unit.devices[binding.interface]
            assert bag["public_key"] == device.public_key_b64
            assert not device.holds_private(decode_key(bag["public_key"]))
            assert bag["endpoint_host"] == unit.internal_address
    text = json.dumps(ns.describe())
    assert "private" not in text


def test_instantiate_without_wireguard(testbed):
    ns = testbed.instantiate_ns("oai-eps", wireguard=False)
    assert ns.phase is NsPhase.READY
    assert ns.relations == []
    assert ns.tunnel_registry == {}
    assert all(not unit.devices for unit in ns.units.values())
    assert "wireguard" not in ns.unit("hss").day0.packages


def test_untunneled_links_switch(testbed):
    ns = testbed.instantiate_ns("oai-eps", untunneled_links=["S11", "Sx"])
    assert sorted(ns.tunnel_registry) == ["S1-C", "S1-U", "S6a"]
    assert len(ns.relations) == 3


def test_tunnels_hide_identifiers_from_taps(testbed):
    ns = testbed.instantiate_ns("oai-eps")
    ctx = _attach(ns)
    assert ctx.ue_ip == "12.1.1.2"
    for needle in (DEFAULT_IMSI, DEFAULT_REALM):
        counts = testbed.tap_scan(ns.id, needle)
        for link in TUNNELED:
            assert counts[f"{ns.id}/{link}"] == 0
        # the radio side is outside the tunnels
        assert counts[f"{ns.id}/Uu"] > 0


def test_plaintext_leaks_identifiers(testbed):
    ns = testbed.instantiate_ns("oai-eps", wireguard=False)
    _attach(ns)
    counts = testbed.tap_scan(ns.id, DEFAULT_IMSI)
    assert counts[f"{ns.id}/S6a"] > 0
    assert counts[f"{ns.id}/S1-C"] > 0


def test_tap_scan_needs_capture(make_testbed):
    orch = make_testbed(capture=False)
    ns = orch.instantiate_ns("oai-eps")
    with pytest.raises(OrchestratorError) as info:
        orch.tap_scan(ns.id, DEFAULT_IMSI)
    assert "capture" in str(info.value)


def test_readiness_gate_before_day1(testbed):
    ns = testbed.create_ns("oai-eps")
    assert ns.phase is NsPhase.DAY0
    enb, mme = ns.unit("enb"), ns.unit("mme")
    with pytest.raises(NotReady):
        enb.send("s1c", b"23:11:EchoRequest,5:seq=1,,")
    testbed.fabric.send(enb.id, "s1c", mme.id, b"23:11:EchoRequest,5:seq=1,,")
    testbed.clock.run_until_idle(limit_us=1e6)
    assert mme.rejected == 1
    with pytest.raises(NotReady):
        testbed.run_action(ns.id, "hss", "show-peers")

    testbed.run_day1(ns.id)
    assert ns.phase is NsPhase.READY


def test_plaintext_to_ready_tunnel_is_rejected(testbed):
    ns = testbed.instantiate_ns("oai-eps")
    enb, mme = ns.unit("enb"), ns.unit("mme")
    seen = []
    mme.app.observers.append(lambda iface, msg, now: seen.append(msg))
    testbed.fabric.send(enb.id, "s1c", mme.id, b"23:11:EchoRequest,5:seq=1,,")
    testbed.clock.run_until_idle(limit_us=1e6)
    assert seen == []
    assert mme.rejected == 1


def test_day1_failure_marks_ns_failed():
    class BrokenCharm(EpsCharm):
        def start_service(self, unit, params):
            raise RuntimeError("service would not start")

    orch = register_lab(Orchestrator(settings=Settings(), seed=1, charm=BrokenCharm()))
    orch.onboard(EPS_PACKAGE)
    with pytest.raises(Day1Failure) as info:
        orch.instantiate_ns("oai-eps")
    assert info.value.action == "start-service"
    ns = orch.instances["ns1"]
    assert ns.phase is NsPhase.FAILED
    assert "start-service" in ns.failure


def test_peering_timeout_when_intersite_drops_everything(make_testbed):
    orch = make_testbed(peering_timeout_s=1.0)
    orch.fabric.intersite_link("vim1", "vim2").loss_prob = 1.0
    with pytest.raises(PeeringTimeout) as info:
        orch.instantiate_ns("oai-eps", placement={"hss": "vim2"})
    assert any(r.startswith("wgpeer-s6a") for r in info.value.relations)
    ns = orch.instances["ns1"]
    assert ns.phase is NsPhase.FAILED
    assert orch.terminate(ns.id) is NsPhase.TERMINATED


# -- resources --------------------------------------------------------------------------------

def test_insufficient_resources(testbed):
    with pytest.raises(InsufficientResources):
        testbed.instantiate_ns("oai-eps", flavor_multiplier=4)
    with pytest.raises(InsufficientResources):
        testbed.instantiate_ns("oai-eps", placement={m: "vim2" for m in ("hss", "mme", "spgwc", "spgwu", "enb", "ue")})
    assert testbed.instances == {}
    assert testbed.vim("vim1").allocated == {"vcpus": 0, "ram_gb": 0, "storage_gb": 0}


def test_flavor_multiplier_scales_nodes(testbed):
    ns = testbed.instantiate_ns("oai-eps", flavor_multiplier=2)
    assert ns.unit("enb").node.vcpus == 8
    assert testbed.vim("vim1").allocated["vcpus"] == 32
    with pytest.raises(ValueError):
        testbed.create_ns("oai-eps", flavor_multiplier=0.5)


def test_unknown_placement_member(testbed):
    with pytest.raises(UnknownUnit):
        testbed.instantiate_ns("oai-eps", placement={"pgw": "vim2"})


# -- multisite --------------------------------------------------------------------------------

def test_multisite_uses_floating_addresses(testbed):
    ns = testbed.instantiate_ns("oai-eps", placement={"hss": "vim2"})
    assert ns.phase is NsPhase.READY
    hss, mme = ns.unit("hss"), ns.unit("mme")
    assert ns.links["S6a"] == "vim1<->vim2"
    assert mme.devices["s6a"].peers[hss.id].endpoint_host == hss.floating_address
    assert hss.devices["s6a"].peers[mme.id].endpoint_host == mme.floating_address
    assert testbed.resolve_endpoint(hss.id, "vim2") == (hss.internal_address, hss.devices["s6a"].listen_port)
    assert testbed.vim("vim2").allocated["vcpus"] == 4
    ctx = _attach(ns)
    assert ctx.ue_ip is not None


def test_multisite_site_view_sees_plaintext_core(testbed):
    ns = testbed.instantiate_ns("oai-eps", placement={"hss": "vim2"}, wireguard=False)
    _attach(ns)
    assert testbed.tap_scan(ns.id, DEFAULT_IMSI)["vim1<->vim2"] == 0
    assert testbed.tap_scan(ns.id, DEFAULT_IMSI, site_view=True)["vim1<->vim2"] > 0


# -- slices -----------------------------------------------------------------------------------

def test_instantiate_urllc_slice(testbed):
    nsi = testbed.instantiate_nsi("urllc")
    assert nsi.qos.five_qi == 82
    assert nsi.kpi == {"latency_ms": 1.0}
    assert nsi.ns.qos_class == nsi.id
    assert nsi.ns.wireguard
    assert testbed.ns(nsi.id) is nsi.ns
    assert testbed.fabric.sites["vim1"].backplane.weights[nsi.id] == nsi.qos.weight
    assert len(nsi.exposed) == 6
    assert all(key.endswith("/mgmt") for key in nsi.exposed)
    assert nsi.describe()["ns"] == nsi.ns.id


def test_two_slices_side_by_side(testbed):
    embb = testbed.instantiate_nsi("embb")
    urllc = testbed.instantiate_nsi("urllc")
    assert embb.kpi == {"dl_mbps": 100.0}
    assert embb.ns.id != urllc.ns.id
    assert set(embb.ns.tunnel_subnets).isdisjoint(urllc.ns.tunnel_subnets)
    assert set(testbed.describe()["slices"]) == {embb.id, urllc.id}


# -- day 2 ------------------------------------------------------------------------------------

def test_rotate_key_repeers(testbed):
    ns = testbed.instantiate_ns("oai-eps")
    hss, mme = ns.unit("hss"), ns.unit("mme")
    old = hss.devices["s6a"].public_key_b64
    result = testbed.run_action(ns.id, "hss", "rotate-key", {"interface": "s6a"})
    new = result["rotated"]["s6a"]
    assert new != old
    assert mme.devices["s6a"].peers[hss.id].remote_public == decode_key(new)
    assert mme.devices["s6a"].session(hss.id) is not None
    assert hss.devices["s6a"].session(mme.id) is not None
    assert _attach(ns).ue_ip is not None


def test_remove_and_add_peer(testbed):
    ns = testbed.instantiate_ns("oai-eps")
    hss, mme = ns.unit("hss"), ns.unit("mme")
    shown = testbed.run_action(ns.id, "hss", "show-peers")["s6a"]
    assert shown["peers"][mme.id]["session"] is True

    testbed.run_action(ns.id, "mme", "remove-peer", {"interface": "s6a", "peer_name": hss.id})
    assert hss.id not in mme.devices["s6a"].peers
    with pytest.raises(ActionFailed):
        testbed.run_action(ns.id, "mme", "remove-peer", {"interface": "s6a", "peer_name": hss.id})

    result = testbed.run_action(ns.id, "mme", "add-peer", {
        "interface": "s6a",
        "peer_name": hss.id,
        "public_key": shown["public_key"],
        "endpoint": hss.internal_address,
        "port": str(shown["listen_port"]),
        "tunnel_address": shown["address"],
    })
    assert result == {"peer": hss.id}
    assert mme.devices["s6a"].session(hss.id) is not None
    assert _attach(ns).ue_ip is not None


def test_add_subscriber(testbed):
    ns = testbed.instantiate_ns("oai-eps")
    result = testbed.run_action(ns.id, "hss", "add-subscriber",
                                {"imsi": "001010000000002", "key_hex": "00" * 16})
    assert result == {"imsi": "001010000000002", "new": True}
    assert "001010000000002" in ns.unit("hss").app.subscribers
    with pytest.raises(UnknownAction):
        testbed.run_action(ns.id, "mme", "add-subscriber", {"imsi": "001010000000003", "key_hex": "00" * 16})


def test_action_checks(testbed):
    ns = testbed.instantiate_ns("oai-eps")
    with pytest.raises(UnknownAction):
        testbed.run_action(ns.id, "hss", "wg-setup")
    with pytest.raises(UnknownUnit):
        testbed.run_action(ns.id, "pgw", "show-peers")
    with pytest.raises(ActionFailed):
        testbed.run_action(ns.id, "hss", "remove-peer", {"interface": "s6a"})
    with pytest.raises(ActionFailed):
        testbed.run_action(ns.id, "hss", "add-subscriber", {"imsi": "1", "key_hex": "00" * 16, "colour": "red"})


# -- termination ------------------------------------------------------------------------------

def test_terminate_releases_everything(testbed):
    ns = testbed.instantiate_ns("oai-eps", placement={"hss": "vim2"})
    relations = list(ns.relations)
    assert testbed.terminate(ns.id) is NsPhase.TERMINATED
    assert testbed.terminate(ns.id) is NsPhase.TERMINATED
    for site in ("vim1", "vim2"):
        assert testbed.vim(site).allocated == {"vcpus": 0, "ram_gb": 0, "storage_gb": 0}
    assert all(testbed.bus.relation(r).state is RelationState.DEPARTED for r in relations)
    assert not any(node.startswith(f"{ns.id}-") for node in testbed.fabric.nodes)
    assert "vim1<->vim2" in testbed.fabric.links
    with pytest.raises(NotReady):
        testbed.run_action(ns.id, "hss", "show-peers")

    again = testbed.instantiate_ns("oai-eps", placement={"hss": "vim2"})
    assert again.phase is NsPhase.READY
    assert again.tunnel_subnets == ns.tunnel_subnets
