"""
Built-in measurement scenarios. Each run builds a fresh two-site lab, instantiates the EPS service
per its recipe, runs the probe battery and returns a BenchReport.
"""
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

from config import Settings, get_settings
from orchestrator.engine import Orchestrator
from orchestrator.handler import INTERSITE_CAPACITY_MBPS, INTERSITE_DELAY_MS, register_lab
from orchestrator.records import NsInstance

from .errors import BenchError, UnknownScenario
from .kpi import KpiThresholds, kpi_check
from .probes import ThroughputRun, latency_probe, run_streams, srt_stats, user_plane_latency
from .report import BenchReport
from .stats import ProbeStats

logger = logging.getLogger(__name__)

DEFAULT_PACKAGE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "packages", "eps")
NSD_ID = "oai-eps"
PROBED_INTERFACES = ("S1-C", "S1-U", "S6a")
UE_INTERFACE = "Uu"


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    wireguard: bool = True
    flavor_multiplier: float = 1.0
    placement: Mapping[str, str] = field(default_factory=dict)
    slices: Tuple[str, ...] = ()


SCENARIOS: Dict[str, Scenario] = {
    s.name: s
    for s in (
        Scenario("eps-plain", "single-site EPS, plaintext interfaces", wireguard=False),
        Scenario("eps-wg", "single-site EPS, every interface tunneled"),
        Scenario("eps-wg-2x", "single-site EPS, tunneled, double resources", flavor_multiplier=2.0),
        Scenario("nsi-embb", "eMBB slice instance", slices=("embb",)),
        Scenario("nsi-urllc", "URLLC slice instance", slices=("urllc",)),
        Scenario("nsi-both", "eMBB and URLLC slice instances side by side", slices=("embb", "urllc")),
        Scenario("multisite-plain", "HSS on the second site, plaintext interfaces", wireguard=False,
                 placement={"hss": "vim2"}),
        Scenario("multisite-wg", "HSS on the second site, every interface tunneled",
                 placement={"hss": "vim2"}),
    )
}


class ProbePlan:
    """Probe counts and durations of one run; the settings supply the defaults."""

    FIELDS = ("attach_count", "latency_count", "latency_interval_ms", "throughput_duration_s", "payload_size")

    def __init__(self, settings: Settings, attach_count: int = 10, payload_size: int = 1420):
        self.attach_count = attach_count
        self.latency_count = settings.latency_count
        self.latency_interval_ms = settings.latency_interval_ms
        self.throughput_duration_s = settings.throughput_duration_s
        self.payload_size = payload_size

    def as_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in self.FIELDS}


def _apply_overrides(base: Settings, overrides: Mapping[str, Any]) -> Tuple[Settings, ProbePlan]:
    unknown = sorted(k for k in overrides if k not in Settings.model_fields and k not in ProbePlan.FIELDS)
    if unknown:
        raise BenchError(f"unknown override(s): {', '.join(unknown)}")
    values = base.model_dump()
    values.update({k: v for k, v in overrides.items() if k in Settings.model_fields})
    settings = Settings(**values)
    plan = ProbePlan(
        settings,
        attach_count=int(overrides.get("attach_count", 10)),
        payload_size=int(overrides.get("payload_size", 1420)),
    )
    for name in ("latency_count", "latency_interval_ms", "throughput_duration_s"):
        if name in overrides:
            setattr(plan, name, type(getattr(plan, name))(overrides[name]))
    return settings, plan


def _needles(ns: NsInstance) -> List[str]:
    ue = ns.units_of("ue")[0].app
    return [ue.imsi, ue.realm, f"hss.{ue.realm}"]


def _isolation(orchestrator: Orchestrator, ns: NsInstance, label: Optional[str]) -> Dict[str, Dict[str, int]]:
    """Needle hits per tunnel-eligible link, as seen from inside the sites."""
    nsd = orchestrator.package.nsds[ns.nsd_id]
    eligible = {link.name: ns.links[link.name] for link in nsd.virtual_links if link.tunneled}
    by_needle = {needle: orchestrator.tap_scan(ns.id, needle, site_view=True) for needle in _needles(ns)}
    result = {}
    for name, link_id in eligible.items():
        key = f"{label}/{name}" if label else name
        result[key] = {needle: counts.get(link_id, 0) for needle, counts in by_needle.items()}
    return result


def _stop_capture(orchestrator: Orchestrator, ns: NsInstance) -> None:
    for tap in orchestrator.taps.get(ns.id, []):
        tap.detach()


def _control_probes(orchestrator: Orchestrator, ns: NsInstance, plan: ProbePlan,
                    label: Optional[str]) -> List[ProbeStats]:
    stats = [srt_stats(orchestrator, ns.id, plan.attach_count, slice_name=label)]
    for interface in PROBED_INTERFACES:
        stats.append(latency_probe(orchestrator, ns.id, interface, plan.latency_count,
                                   plan.latency_interval_ms, slice_name=label))
    return stats


def _throughput(orchestrator: Orchestrator, targets: List[Tuple[NsInstance, Optional[str]]],
                plan: ProbePlan) -> List[ProbeStats]:
    """Per interface, one simultaneous stream in every target NS."""
    stats = []
    for interface in PROBED_INTERFACES + (UE_INTERFACE,):
        runs = [
            ThroughputRun(orchestrator, ns.id, interface, plan.throughput_duration_s, plan.payload_size, label)
            for ns, label in targets
        ]
        stats.extend(run_streams(orchestrator, runs))
    return stats


def _config(scenario: Scenario, seed: int, settings: Settings, plan: ProbePlan,
            overrides: Mapping[str, Any], targets: List[Tuple[NsInstance, Optional[str]]]) -> Dict[str, Any]:
    first = targets[0][0]
    return {
        "scenario": scenario.name,
        "seed": seed,
        "wireguard": scenario.wireguard,
        "flavor_multiplier": first.flavor_multiplier,
        "placement": dict(first.placement),
        "slices": list(scenario.slices),
        "intersite": {"capacity_mbps": INTERSITE_CAPACITY_MBPS, "delay_ms": INTERSITE_DELAY_MS},
        "links": {
            "intra_site_capacity_mbps": settings.intra_site_capacity_mbps,
            "intra_site_delay_ms": settings.intra_site_delay_ms,
            "underlay_mtu": settings.underlay_mtu,
        },
        "probes": plan.as_dict(),
        "overrides": dict(sorted(overrides.items())),
    }


def run_scenario(
    name: str,
    overrides: Optional[Mapping[str, Any]] = None,
    seed: Optional[int] = None,
    settings: Optional[Settings] = None,
    package_path: str = DEFAULT_PACKAGE,
) -> BenchReport:
    """Instantiate, probe, evaluate and terminate one built-in scenario."""
    scenario = SCENARIOS.get(name)
    if scenario is None:
        raise UnknownScenario(f"unknown scenario '{name}'; valid scenarios: {', '.join(SCENARIOS)}")
    overrides = dict(overrides or {})
    settings, plan = _apply_overrides(settings or get_settings(), overrides)
    seed = settings.default_seed if seed is None else seed
    logger.info(f"Scenario {name} starting (seed {seed})")

    orchestrator = register_lab(Orchestrator(settings=settings, seed=seed, capture=True))
    orchestrator.onboard(package_path)

    targets: List[Tuple[NsInstance, Optional[str]]] = []
    try:
        if scenario.slices:
            for nst_id in scenario.slices:
                nsi = orchestrator.instantiate_nsi(nst_id, scenario.placement or None, scenario.flavor_multiplier)
                targets.append((nsi.ns, nsi.slice_type))
        else:
            ns = orchestrator.instantiate_ns(NSD_ID, scenario.placement or None, wireguard=scenario.wireguard,
                                             flavor_multiplier=scenario.flavor_multiplier)
            targets.append((ns, None))

        stats: List[ProbeStats] = []
        for ns, label in targets:
            stats.extend(_control_probes(orchestrator, ns, plan, label))
        isolation: Dict[str, Dict[str, int]] = {}
        for ns, label in targets:
            isolation.update(_isolation(orchestrator, ns, label))
            _stop_capture(orchestrator, ns)
        for ns, label in targets:
            stats.append(user_plane_latency(orchestrator, ns.id, plan.latency_count, plan.latency_interval_ms,
                                            slice_name=label))
        stats.extend(_throughput(orchestrator, targets, plan))
        config = _config(scenario, seed, settings, plan, overrides, targets)
    finally:
        for ns, _ in targets:
            orchestrator.terminate(ns.id)

    thresholds = KpiThresholds(urllc_latency_ms=settings.urllc_latency_ms, embb_dl_mbps=settings.embb_dl_mbps)
    report = BenchReport(
        scenario=name,
        config=config,
        stats=stats,
        isolation=isolation,
        thresholds=thresholds,
        verdicts=kpi_check(stats, thresholds),
    )
    logger.info(f"Scenario {name} finished: {report.verdicts}")
    return report
