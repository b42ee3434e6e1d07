"""
Probes: echo latency, greedy throughput streams, attach SRT and UE user-plane round trips.

Every probe runs on the orchestrator's virtual clock and returns once its samples are in.
Probes on a link run from the requirer unit of the link's relation towards the provider.
"""
import itertools
import logging
from typing import Dict, List, Optional, Tuple

import simpy

from eps.errors import AttachRejected, NotAttached
from eps.functions import Mme, Ue, attach
from eps.messages import EpsMessage, MessageKind, encode, message, sized
from orchestrator.engine import Orchestrator
from orchestrator.errors import NotReady
from orchestrator.records import NsInstance, NsPhase
from orchestrator.unit import Unit

from .errors import EmptyProbe, UnknownInterface
from .stats import ProbeStats, summarize

logger = logging.getLogger(__name__)

ECHO_DATA_BYTES = 56
DEFAULT_PAYLOAD = 1420
DEFAULT_TIMEOUT_MS = 1000.0
DRAIN_TIMEOUT_US = 1e6
THROUGHPUT_BUCKETS = 10

_probe_ids = itertools.count(1)


def _probe_id() -> str:
    # fixed width keeps message sizes, and so timings, identical between runs
    return f"p{next(_probe_ids) % 1_000_000:06d}"


def _ready(orchestrator: Orchestrator, ns_id: str) -> NsInstance:
    ns = orchestrator.ns(ns_id)
    if ns.phase is not NsPhase.READY:
        raise NotReady(f"{ns.id} is {ns.phase.value}, not ready")
    return ns


def resolve_path(orchestrator: Orchestrator, ns_id: str, interface: str) -> Tuple[NsInstance, Unit, Unit, str]:
    """(ns, sending unit, receiving unit, sending interface) for a link name such as 'S6a'."""
    ns = _ready(orchestrator, ns_id)
    link_id = ns.links.get(interface)
    if link_id is None:
        raise UnknownInterface(f"{ns.id} has no link '{interface}'; links are {', '.join(sorted(ns.links))}")
    src_id, dst_id = ns.directions[interface]
    src, dst = ns.units[src_id], ns.units[dst_id]
    src_iface = next(
        (i for i, peer in src.counterparts.items() if peer == dst.id and src.node.interfaces[i].id == link_id),
        None,
    )
    if src_iface is None:
        raise UnknownInterface(f"{src.id} has no interface on {interface}")
    if src.app is None or dst.app is None:
        raise NotReady(f"service is not running on both ends of {interface}")
    return ns, src, dst, src_iface


def latency_probe(
    orchestrator: Orchestrator,
    ns_id: str,
    interface: str,
    count: Optional[int] = None,
    interval_ms: Optional[float] = None,
    timeout_ms: float = DEFAULT_TIMEOUT_MS,
    slice_name: Optional[str] = None,
) -> ProbeStats:
    """Echo round trips over one link, ping-style. Unanswered echoes are counted as excluded."""
    ns, src, dst, iface = resolve_path(orchestrator, ns_id, interface)
    settings = orchestrator.settings
    count = settings.latency_count if count is None else count
    interval_us = (settings.latency_interval_ms if interval_ms is None else interval_ms) * 1000
    if count < 1:
        raise EmptyProbe("latency probe needs at least one echo")
    clock = orchestrator.clock
    probe = _probe_id()
    waiting: Dict[str, simpy.Event] = {}
    rtts: List[float] = []
    lost = 0

    def observe(_: str, msg: EpsMessage, now: float) -> None:
        if msg.kind is MessageKind.ECHO_REPLY and msg.get("probe") == probe:
            event = waiting.pop(msg.get("seq", ""), None)
            if event is not None and not event.triggered:
                event.succeed(now)

    def run():
        nonlocal lost
        for seq in range(count):
            answered = clock.event()
            waiting[str(seq)] = answered
            sent = clock.now_us
            src.send(iface, encode(message(MessageKind.ECHO_REQUEST, probe=probe, seq=seq,
                                           data="x" * ECHO_DATA_BYTES)))
            outcome = yield answered | clock.env.timeout(timeout_ms * 1000)
            if answered in outcome:
                rtts.append((clock.now_us - sent) / 1000)
            else:
                waiting.pop(str(seq), None)
                lost += 1
            if interval_us and seq < count - 1:
                yield clock.env.timeout(interval_us)

    src.app.observers.append(observe)
    try:
        clock.run_until(clock.spawn(run()), count * (timeout_ms * 1000 + interval_us) + 1)
    finally:
        src.app.observers.remove(observe)
    logger.info(f"{ns.id} {interface} latency: {len(rtts)}/{count} echoes answered")
    return summarize(interface, "latency", rtts, slice_name, excluded=lost)


class ThroughputRun:
    """
    A greedy one-way stream of fixed-size probe messages. Several runs can be started before the
    clock is driven, which is how simultaneous slices are measured.
    """

    def __init__(
        self,
        orchestrator: Orchestrator,
        ns_id: str,
        interface: str,
        duration_s: Optional[float] = None,
        payload_size: int = DEFAULT_PAYLOAD,
        slice_name: Optional[str] = None,
    ):
        self.ns, self.src, self.dst, self.iface = resolve_path(orchestrator, ns_id, interface)
        settings = orchestrator.settings
        self.clock = orchestrator.clock
        self.interface = interface
        self.duration_us = (settings.throughput_duration_s if duration_s is None else duration_s) * 1e6
        self.payload_size = payload_size
        self.window = settings.inflight_frames
        self.slice_name = slice_name
        self.probe = _probe_id()
        self._template = sized(MessageKind.PROBE_DATA, payload_size, probe=self.probe, seq="0" * 10)
        self.sent = 0
        self.arrivals: List[float] = []
        self._space: Optional[simpy.Event] = None
        self.process: Optional[simpy.Process] = None

    def _observe(self, _: str, msg: EpsMessage, now: float) -> None:
        if msg.kind is MessageKind.PROBE_DATA and msg.get("probe") == self.probe:
            self.arrivals.append(now)
            if self._space is not None and not self._space.triggered:
                self._space.succeed()

    def _stream(self):
        env = self.clock.env
        end = self.clock.now_us + self.duration_us
        while self.clock.now_us < end:
            if self.sent - len(self.arrivals) >= self.window:
                self._space = self.clock.event()
                yield self._space | env.timeout(end - self.clock.now_us)
                continue
            frame = encode(self._template.with_fields(seq=f"{self.sent:010d}"))
            self.src.send(self.iface, frame)
            self.sent += 1
        drain_end = self.clock.now_us + DRAIN_TIMEOUT_US
        while len(self.arrivals) < self.sent and self.clock.now_us < drain_end:
            self._space = self.clock.event()
            yield self._space | env.timeout(drain_end - self.clock.now_us)
        self.dst.app.observers.remove(self._observe)

    def start(self) -> simpy.Process:
        self.dst.app.observers.append(self._observe)
        self.process = self.clock.spawn(self._stream())
        return self.process

    def result(self) -> ProbeStats:
        """Delivered payload rate between the first and the last arrival, in equal time buckets."""
        if len(self.arrivals) < 2:
            raise EmptyProbe(f"throughput on {self.interface}: {len(self.arrivals)} frame(s) delivered")
        first, last = self.arrivals[0], self.arrivals[-1]
        elapsed = last - first
        if elapsed <= 0:
            raise EmptyProbe(f"throughput on {self.interface}: all frames arrived at once")
        buckets = min(THROUGHPUT_BUCKETS, len(self.arrivals) - 1)
        width = elapsed / buckets
        bits = [0.0] * buckets
        for t in self.arrivals[1:]:
            bits[min(buckets - 1, int((t - first) / width))] += self.payload_size * 8
        rates = [b / width for b in bits]
        return summarize(self.interface, "throughput", rates, self.slice_name,
                         excluded=self.sent - len(self.arrivals))


def run_streams(orchestrator: Orchestrator, runs: List[ThroughputRun]) -> List[ProbeStats]:
    """Start every stream, drive the clock until all have finished, return their statistics."""
    processes = [run.start() for run in runs]
    horizon = max(run.duration_us for run in runs) + 2 * DRAIN_TIMEOUT_US
    orchestrator.clock.run_until(orchestrator.clock.env.all_of(processes), horizon)
    return [run.result() for run in runs]


def throughput_probe(
    orchestrator: Orchestrator,
    ns_id: str,
    interface: str,
    duration_s: Optional[float] = None,
    payload_size: int = DEFAULT_PAYLOAD,
    slice_name: Optional[str] = None,
) -> ProbeStats:
    run = ThroughputRun(orchestrator, ns_id, interface, duration_s, payload_size, slice_name)
    stats = run_streams(orchestrator, [run])[0]
    logger.info(f"{run.ns.id} {interface} throughput: {stats.mean:.1f} Mbps over {run.sent} frames")
    return stats


def _single(ns: NsInstance, vnfd_id: str) -> Unit:
    units = ns.units_of(vnfd_id)
    if not units or units[0].app is None:
        raise NotReady(f"{ns.id} has no running {vnfd_id}")
    return units[0]


def srt_stats(
    orchestrator: Orchestrator,
    ns_id: str,
    attach_count: int,
    slice_name: Optional[str] = None,
) -> ProbeStats:
    """
    Attach the UE attach_count times in a row and summarize the AIR/AIA service response times
    seen by the MME. Rejected attaches are excluded and counted separately.
    """
    ns = _ready(orchestrator, ns_id)
    if attach_count < 1:
        raise EmptyProbe("SRT needs at least one attach")
    ue, mme = _single(ns, "ue").app, _single(ns, "mme").app
    assert isinstance(ue, Ue) and isinstance(mme, Mme)
    first = len(mme.srt_samples)
    rejected = 0
    for _ in range(attach_count):
        try:
            attach(ue, mme, orchestrator.settings.attach_timeout_s)
        except AttachRejected as e:
            rejected += 1
            logger.warning(f"{ns.id}: {e}")
    samples = [s.srt_ms for s in mme.srt_samples[first:] if s.success]
    return summarize("S6a", "srt", samples, slice_name, excluded=rejected)


def user_plane_latency(
    orchestrator: Orchestrator,
    ns_id: str,
    count: Optional[int] = None,
    interval_ms: Optional[float] = None,
    timeout_ms: float = DEFAULT_TIMEOUT_MS,
    slice_name: Optional[str] = None,
) -> ProbeStats:
    """Round trips of UE data through eNB and SPGW-U to the PDN echo sink and back."""
    ns = _ready(orchestrator, ns_id)
    ue = _single(ns, "ue").app
    assert isinstance(ue, Ue)
    if not ue.attached:
        raise NotAttached(f"{ue.imsi} is not attached")
    settings = orchestrator.settings
    count = settings.latency_count if count is None else count
    interval_us = (settings.latency_interval_ms if interval_ms is None else interval_ms) * 1000
    if count < 1:
        raise EmptyProbe("user-plane probe needs at least one packet")
    clock = orchestrator.clock
    probe = _probe_id()
    waiting: Dict[str, simpy.Event] = {}
    rtts: List[float] = []
    lost = 0

    def observe(_: str, msg: EpsMessage, now: float) -> None:
        if msg.kind is MessageKind.GTP_DATA and msg.get("probe") == probe:
            event = waiting.pop(msg.get("seq", ""), None)
            if event is not None and not event.triggered:
                event.succeed(now)

    def run():
        nonlocal lost
        for seq in range(count):
            answered = clock.event()
            waiting[str(seq)] = answered
            sent = clock.now_us
            ue.send_data("x" * ECHO_DATA_BYTES, probe=probe, seq=seq, echo=1)
            outcome = yield answered | clock.env.timeout(timeout_ms * 1000)
            if answered in outcome:
                rtts.append((clock.now_us - sent) / 1000)
            else:
                waiting.pop(str(seq), None)
                lost += 1
            if interval_us and seq < count - 1:
                yield clock.env.timeout(interval_us)

    ue.observers.append(observe)
    try:
        clock.run_until(clock.spawn(run()), count * (timeout_ms * 1000 + interval_us) + 1)
    finally:
        ue.observers.remove(observe)
    return summarize("Uu", "latency", rtts, slice_name, excluded=lost)
