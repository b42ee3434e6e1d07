"""
Links and the weighted fair scheduler shared by links, node CPUs and site backplanes.
"""
import heapq
import itertools
import logging
import random
from typing import Dict, List, Optional, Tuple

import simpy

from .tap import Tap

logger = logging.getLogger(__name__)

DEFAULT_CLASS = "default"


class FairQueue:
    """
    Serializes jobs on one resource.

    Classes share the resource by self-clocked weighted fair queuing; jobs of one class are served
    FIFO. A job is described only by its service time in microseconds.
    """

    def __init__(self, env: simpy.Environment, weights: Optional[Dict[str, float]] = None):
        self.env = env
        self.weights: Dict[str, float] = dict(weights or {})
        self._heap: List[Tuple[float, int, float, simpy.Event]] = []
        self._finish: Dict[str, float] = {}
        self._virtual = 0.0
        self._seq = itertools.count()
        self._wakeup: Optional[simpy.Event] = None
        self.busy_us = 0.0
        self.jobs = 0
        env.process(self._serve())

    def submit(self, service_us: float, qos_class: str = DEFAULT_CLASS) -> simpy.Event:
        done = self.env.event()
        weight = self.weights.get(qos_class, 1.0)
        start = max(self._virtual, self._finish.get(qos_class, 0.0))
        tag = start + service_us / weight
        self._finish[qos_class] = tag
        heapq.heappush(self._heap, (tag, next(self._seq), service_us, done))
        if self._wakeup is not None and not self._wakeup.triggered:
            self._wakeup.succeed()
        return done

    def _serve(self):
        while True:
            if not self._heap:
                self._wakeup = self.env.event()
                yield self._wakeup
                continue
            tag, _, service_us, done = heapq.heappop(self._heap)
            self._virtual = tag
            if service_us > 0:
                yield self.env.timeout(service_us)
            self.busy_us += service_us
            self.jobs += 1
            done.succeed(self.env.now)


class EmuLink:
    """
    Full-duplex link between two endpoints. Each direction has its own transmitter; propagation
    delay, jitter and loss apply per frame.
    """

    def __init__(
        self,
        env: simpy.Environment,
        link_id: str,
        endpoints: Tuple[str, str],
        capacity_mbps: float,
        delay_ms: float = 0.0,
        jitter_ms: float = 0.0,
        loss_prob: float = 0.0,
        rng: Optional[random.Random] = None,
        weights: Optional[Dict[str, float]] = None,
    ):
        if capacity_mbps <= 0:
            raise ValueError(f"link {link_id}: capacity must be positive")
        if delay_ms < 0 or jitter_ms < 0:
            raise ValueError(f"link {link_id}: delay and jitter must not be negative")
        if not 0.0 <= loss_prob <= 1.0:
            raise ValueError(f"link {link_id}: loss probability must be within [0, 1]")
        self.env = env
        self.id = link_id
        self.endpoints = endpoints
        self.capacity_mbps = capacity_mbps
        self.delay_ms = delay_ms
        self.jitter_ms = jitter_ms
        self.loss_prob = loss_prob
        self.rng = rng or random.Random(0)
        self._transmitters = {end: FairQueue(env, weights) for end in endpoints}
        self._last_arrival = {end: 0.0 for end in endpoints}
        self.taps: List[Tap] = []
        self.sent_bytes = 0
        self.delivered_bytes = 0

    @property
    def intersite(self) -> bool:
        return False

    def set_weight(self, qos_class: str, weight: float) -> None:
        for transmitter in self._transmitters.values():
            transmitter.weights[qos_class] = weight

    def serialization_us(self, wire_bytes: int) -> float:
        return wire_bytes * 8 / self.capacity_mbps

    def other_end(self, end: str) -> str:
        a, b = self.endpoints
        return b if end == a else a

    def transmit(self, from_end: str, wire_bytes: int, qos_class: str) -> simpy.Event:
        """Queue a frame on the transmitter facing away from from_end."""
        return self._transmitters[from_end].submit(self.serialization_us(wire_bytes), qos_class)

    def propagate(self, from_end: str) -> Optional[float]:
        """
        Draw the propagation delay in microseconds for a frame leaving now, or None if lost.
        Jitter never reorders a direction: arrivals are clamped to the previous one.
        """
        if self.loss_prob and self.rng.random() < self.loss_prob:
            return None
        delay_us = self.delay_ms * 1000
        floor = self._last_arrival[from_end]
        if self.jitter_ms:
            delay_us = max(0.0, delay_us + self.rng.uniform(-self.jitter_ms, self.jitter_ms) * 1000)
            # clamped arrivals stay 1 ns apart so float rounding cannot swap them
            floor += 1e-3
        arrival = max(self.env.now + delay_us, floor)
        self._last_arrival[from_end] = arrival
        return arrival - self.env.now

    def record(self, src: str, dst: str, payload: bytes) -> None:
        for tap in self.taps:
            tap.record(self.env.now, src, dst, self.id, payload)

    def describe(self) -> Dict[str, object]:
        return {
            "id": self.id,
            "endpoints": list(self.endpoints),
            "capacity_mbps": self.capacity_mbps,
            "delay_ms": self.delay_ms,
            "jitter_ms": self.jitter_ms,
            "loss_prob": self.loss_prob,
        }


class IntersiteLink(EmuLink):
    """Link joining two sites; its endpoints are site ids rather than node ids."""

    def __init__(self, *args, site_tunnel: bool = False, **kwargs):
        super().__init__(*args, **kwargs)
        self.site_tunnel = site_tunnel

    @property
    def intersite(self) -> bool:
        return True

    def describe(self) -> Dict[str, object]:
        info = super().describe()
        info["site_tunnel"] = self.site_tunnel
        return info
