import json

import pytest

from bench.errors import BenchError, EmptyProbe, UnknownInterface, UnknownScenario
from bench.kpi import FAIL, NOT_EVALUATED, PASS, KpiThresholds, kpi_check
from bench.probes import latency_probe, srt_stats, throughput_probe, user_plane_latency
from bench.report import CSV_COLUMNS, FORMAT_VERSION, export, load_report, to_csv, to_json
from bench.scenarios import SCENARIOS, run_scenario
from bench.stats import ProbeStats, summarize
from config import Settings
from eps.errors import NotAttached
from eps.messages import MessageKind, encode
from eps.subscribers import DEFAULT_IMSI, DEFAULT_REALM
from orchestrator.errors import NotReady
from tunnel.frames import MSG_TRANSPORT, frame_type

TUNNELED = ("S1-C", "S1-U", "S6a")
SHORT = {"attach_count": 2, "latency_count": 5, "throughput_duration_s": 0.01}


def _stats(interface, metric, mean, slice_name=None):
    return ProbeStats(interface=interface, metric=metric, count=1, min=mean, mean=mean, max=mean, mdev=0.0,
                      unit="ms" if metric != "throughput" else "Mbps", slice=slice_name)


@pytest.fixture(scope="module")
def reports():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = run_scenario(name, SHORT, seed=1, settings=Settings())
        return cache[name]

    return get


# -- statistics and KPIs ----------------------------------------------------------------------

def test_summarize_is_ping_style():
    stats = summarize("S6a", "latency", [1.0, 2.0, 3.0], excluded=2)
    assert (stats.min, stats.mean, stats.max) == (1.0, 2.0, 3.0)
    assert stats.mdev == pytest.approx(0.816497)
    assert stats.unit == "ms"
    assert stats.excluded == 2


def test_summarize_single_sample():
    stats = summarize("S1-U", "throughput", [123.4567891])
    assert stats.min == stats.mean == stats.max == 123.456789
    assert stats.mdev == 0
    assert stats.unit == "Mbps"


def test_summarize_needs_samples():
    with pytest.raises(EmptyProbe):
        summarize("S6a", "srt", [])


def test_stats_reject_unordered_values():
    with pytest.raises(ValueError):
        ProbeStats(interface="S6a", metric="latency", count=2, min=2.0, mean=1.0, max=3.0, mdev=0.0, unit="ms")


@pytest.mark.parametrize("stats, expected", [
    ([_stats("S6a", "latency", 0.9)], {"urllc_latency_ms": PASS, "embb_dl_mbps": NOT_EVALUATED}),
    ([_stats("S6a", "latency", 1.0)], {"urllc_latency_ms": FAIL, "embb_dl_mbps": NOT_EVALUATED}),
    ([_stats("S1-U", "throughput", 101.0)], {"urllc_latency_ms": NOT_EVALUATED, "embb_dl_mbps": PASS}),
    ([_stats("S1-U", "throughput", 100.0)], {"urllc_latency_ms": NOT_EVALUATED, "embb_dl_mbps": PASS}),
    ([_stats("S1-U", "throughput", 99.9)], {"urllc_latency_ms": NOT_EVALUATED, "embb_dl_mbps": FAIL}),
    ([], {"urllc_latency_ms": NOT_EVALUATED, "embb_dl_mbps": NOT_EVALUATED}),
])
def test_kpi_check(stats, expected):
    assert kpi_check(stats) == expected


def test_kpi_check_targets_slices_and_interfaces():
    stats = [
        _stats("S6a", "latency", 5.0, slice_name="embb"),
        _stats("S1-C", "latency", 0.3, slice_name="urllc"),
        _stats("Uu", "latency", 9.0),
        _stats("S1-U", "throughput", 150.0, slice_name="embb"),
        _stats("S1-U", "throughput", 10.0, slice_name="urllc"),
        _stats("S6a", "throughput", 10.0),
    ]
    assert kpi_check(stats) == {"urllc_latency_ms": PASS, "embb_dl_mbps": PASS}
    strict = KpiThresholds(urllc_latency_ms=0.2, embb_dl_mbps=200)
    assert kpi_check(stats, strict) == {"urllc_latency_ms": FAIL, "embb_dl_mbps": FAIL}


# -- probes -----------------------------------------------------------------------------------

def _hop_us(n, src_vcpus, dst_vcpus, sealed):
    wire_bits = (n + 28) * 8
    cpu = wire_bits / (500 * src_vcpus) + (wire_bits / (2000 * src_vcpus) if sealed else 0)
    opened = wire_bits / (2000 * dst_vcpus) if sealed else 0
    return cpu + wire_bits / 10000 + wire_bits / 20000 + 150 + opened


def _s6a_echo_ms(sealed):
    # 110-byte request from the 2-vCPU MME, 107-byte reply from the 4-vCPU HSS
    extra = 32 if sealed else 0
    return (_hop_us(110 + extra, 2, 4, sealed) + _hop_us(107 + extra, 4, 2, sealed)) / 1000


def test_latency_probe_matches_the_link_model(make_testbed):
    means = {}
    for wireguard in (False, True):
        orch = make_testbed(capture=False)
        ns = orch.instantiate_ns("oai-eps", wireguard=wireguard)
        stats = latency_probe(orch, ns.id, "S6a", count=5, interval_ms=1.0)
        assert stats.count == 5 and stats.excluded == 0
        assert stats.mdev == pytest.approx(0, abs=1e-6)
        means[wireguard] = stats.mean

    assert means[False] == pytest.approx(_s6a_echo_ms(False), rel=1e-3)
    surcharge = _s6a_echo_ms(True) - _s6a_echo_ms(False)
    assert means[True] - means[False] == pytest.approx(surcharge, rel=0.05)


def test_single_echo_has_no_deviation(make_testbed):
    orch = make_testbed(capture=False)
    ns = orch.instantiate_ns("oai-eps")
    stats = latency_probe(orch, ns.id, "S1-C", count=1)
    assert stats.count == 1
    assert stats.mdev == 0


def test_probe_errors(make_testbed):
    orch = make_testbed(capture=False)
    ns = orch.instantiate_ns("oai-eps")
    with pytest.raises(UnknownInterface):
        latency_probe(orch, ns.id, "N3", count=1)
    with pytest.raises(EmptyProbe):
        latency_probe(orch, ns.id, "S6a", count=0)
    with pytest.raises(EmptyProbe):
        srt_stats(orch, ns.id, attach_count=0)
    with pytest.raises(NotAttached):
        user_plane_latency(orch, ns.id, count=1)

    orch.terminate(ns.id)
    with pytest.raises(NotReady):
        latency_probe(orch, ns.id, "S6a", count=1)


@pytest.mark.parametrize("wireguard, frame_bytes", [(False, 1420), (True, 1452)])
def test_throughput_follows_tunnel_overhead(make_testbed, wireguard, frame_bytes):
    orch = make_testbed(capture=False, intra_site_capacity_mbps=200)
    ns = orch.instantiate_ns("oai-eps", wireguard=wireguard)
    stats = throughput_probe(orch, ns.id, "S1-U", duration_s=0.05)
    expected = 200 * 1420 / (frame_bytes + 28)
    assert stats.mean == pytest.approx(expected, rel=0.02)
    assert stats.excluded == 0
    assert stats.unit == "Mbps"


def _tunnel_surcharge_ms(request_len, reply_len):
    sealed = _hop_us(request_len + 32, 2, 4, True) + _hop_us(reply_len + 32, 4, 2, True)
    plain = _hop_us(request_len, 2, 4, False) + _hop_us(reply_len, 4, 2, False)
    return (sealed - plain) / 1000


def test_srt_without_link_delay_is_hss_service_time(make_testbed):
    means, sizes = {}, {}
    for wireguard in (False, True):
        orch = make_testbed(capture=False, intra_site_delay_ms=0)
        ns = orch.instantiate_ns("oai-eps", wireguard=wireguard)
        seen = sizes[wireguard] = {MessageKind.AUTH_INFO_REQUEST: set(), MessageKind.AUTH_INFO_ANSWER: set()}
        for vnfd_id in ("hss", "mme"):
            ns.units_of(vnfd_id)[0].app.observers.append(
                lambda iface, msg, now, seen=seen: msg.kind in seen and seen[msg.kind].add(len(encode(msg))))
        stats = srt_stats(orch, ns.id, attach_count=3)
        assert stats.count == 3
        assert stats.interface == "S6a" and stats.metric == "srt"
        means[wireguard] = stats.mean
    assert means[False] == pytest.approx(5.4, abs=0.05)

    assert sizes[False] == sizes[True]
    (air,), (aia,) = sizes[False][MessageKind.AUTH_INFO_REQUEST], sizes[False][MessageKind.AUTH_INFO_ANSWER]
    # only the seal and open of AIR and AIA, and their 32 extra bytes, separate the two
    assert means[True] - means[False] == pytest.approx(_tunnel_surcharge_ms(air, aia), rel=0.05)


def test_user_plane_latency_after_attach(make_testbed):
    orch = make_testbed(capture=False)
    ns = orch.instantiate_ns("oai-eps")
    srt_stats(orch, ns.id, attach_count=1)
    stats = user_plane_latency(orch, ns.id, count=3)
    assert stats.count == 3 and stats.excluded == 0
    assert stats.interface == "Uu"
    # the 2 Mbps radio link dominates
    assert stats.mean > 0.5


def test_multisite_latency_and_throughput(make_testbed):
    results = {}
    for wireguard in (False, True):
        orch = make_testbed(capture=wireguard)
        ns = orch.instantiate_ns("oai-eps", {"hss": "vim2"}, wireguard=wireguard)
        latency = latency_probe(orch, ns.id, "S6a", count=5)
        throughput = throughput_probe(orch, ns.id, "S6a", duration_s=0.2)
        results[wireguard] = (latency.mean, throughput.mean)
        if wireguard:
            intersite = orch.fabric.intersite_link("vim1", "vim2")
            records = [r for tap in orch.taps[ns.id] for r in tap.records if r.link == intersite.id]
            assert records
            inner = [orch.fabric.peek_site_layer(ns.units[r.dst].site, r.payload) for r in records]
            assert any(frame_type(frame) == MSG_TRANSPORT for frame in inner)

    plain_rtt, plain_rate = results[False]
    wg_rtt, wg_rate = results[True]
    assert plain_rtt == pytest.approx(18.36, abs=0.1)
    assert plain_rtt < wg_rtt < 21
    assert 0.85 * plain_rate <= wg_rate <= 0.99 * plain_rate


def test_doubled_flavor_scales_user_plane(make_testbed):
    results = {}
    for multiplier in (1.0, 2.0):
        orch = make_testbed(capture=False)
        ns = orch.instantiate_ns("oai-eps", flavor_multiplier=multiplier)
        latency = latency_probe(orch, ns.id, "S1-U", count=5)
        throughput = throughput_probe(orch, ns.id, "S1-U", duration_s=0.02)
        results[multiplier] = (latency.mean, throughput.mean)
    assert results[2.0][1] >= 1.5 * results[1.0][1]
    assert results[2.0][0] == pytest.approx(results[1.0][0], rel=0.2)


# -- scenarios --------------------------------------------------------------------------------

def test_plaintext_scenario_leaks_identifiers(reports):
    report = reports("eps-plain")
    s6a = report.isolation["S6a"]
    assert set(s6a) == {DEFAULT_IMSI, DEFAULT_REALM, f"hss.{DEFAULT_REALM}"}
    assert all(count >= 1 for count in s6a.values())
    assert report.config["wireguard"] is False


def test_tunneled_scenario_hides_identifiers(reports):
    report = reports("eps-wg")
    assert set(report.isolation) == {"S1-C", "S1-U", "S6a", "S11", "Sx"}
    for link, counts in report.isolation.items():
        assert all(count == 0 for count in counts.values()), link


def test_tunnels_cost_latency_and_throughput(reports):
    plain, wg = reports("eps-plain"), reports("eps-wg")
    for interface in TUNNELED:
        assert wg.find(interface, "latency").mean >= plain.find(interface, "latency").mean
        assert wg.find(interface, "throughput").mean <= plain.find(interface, "throughput").mean


def test_scenario_report_shape(reports):
    report = reports("eps-wg")
    assert report.format_version == FORMAT_VERSION
    assert report.find("S6a", "srt").count == 2
    assert report.find("Uu", "latency").count == 5
    assert {s.interface for s in report.stats if s.metric == "throughput"} == {"S1-C", "S1-U", "S6a", "Uu"}
    assert report.config["probes"]["latency_count"] == 5
    assert report.config["overrides"] == dict(sorted(SHORT.items()))
    assert report.verdicts == {"urllc_latency_ms": PASS, "embb_dl_mbps": PASS}
    assert report.recompute_verdicts() == report.verdicts


def test_slices_share_the_testbed(reports):
    both = reports("nsi-both")
    solo = {"embb": reports("nsi-embb"), "urllc": reports("nsi-urllc")}
    for label, report in solo.items():
        alone = report.find("S1-U", "throughput", label).mean
        shared = both.find("S1-U", "throughput", label).mean
        assert shared == pytest.approx(alone, rel=0.1)
    assert both.verdicts == {"urllc_latency_ms": PASS, "embb_dl_mbps": PASS}
    assert "urllc/S6a" in both.isolation and "embb/S6a" in both.isolation


def test_runs_are_deterministic(reports):
    again = run_scenario("eps-wg", SHORT, seed=1, settings=Settings())
    assert to_json(again) == to_json(reports("eps-wg"))


def test_unknown_scenario_lists_valid_names():
    with pytest.raises(UnknownScenario) as info:
        run_scenario("eps-quantum")
    for name in SCENARIOS:
        assert name in str(info.value)


def test_unknown_override():
    with pytest.raises(BenchError, match="warp_factor"):
        run_scenario("eps-wg", {"warp_factor": 9}, settings=Settings())


# -- reports ----------------------------------------------------------------------------------

def test_export_and_load(reports, tmp_path):
    report = reports("eps-plain")
    path = export(report, tmp_path / "eps-plain.json")
    loaded = load_report(path)
    assert loaded == report
    assert loaded.recompute_verdicts() == report.verdicts
    assert json.loads((tmp_path / "eps-plain.json").read_text())["scenario"] == "eps-plain"


def test_csv_has_one_row_per_statistic(reports):
    report = reports("eps-plain")
    rows = to_csv(report).strip().splitlines()
    assert rows[0] == ",".join(CSV_COLUMNS)
    assert len(rows) == len(report.stats) + 1


def test_export_errors(reports, tmp_path):
    report = reports("eps-plain")
    with pytest.raises(BenchError):
        export(report, tmp_path / "missing" / "report.json")
    with pytest.raises(BenchError):
        export(report, tmp_path / "report.xml", fmt="xml")


def test_load_rejects_foreign_files(reports, tmp_path):
    with pytest.raises(BenchError):
        load_report(tmp_path / "absent.json")
    bogus = tmp_path / "bogus.json"
    bogus.write_text('{"hello": "world"}')
    with pytest.raises(BenchError):
        load_report(bogus)
    data = json.loads(to_json(reports("eps-plain")))
    data["format_version"] = "sliceguard-report/0"
    old = tmp_path / "old.json"
    old.write_text(json.dumps(data))
    with pytest.raises(BenchError, match="unsupported"):
        load_report(old)
