"""
Emulated nodes: a CPU that forwards at vcpus x per-vCPU rate and a set of interface attachments.
"""
import logging
from typing import Callable, Dict, Optional

import simpy

from .link import EmuLink, FairQueue

logger = logging.getLogger(__name__)

# (interface, source node id, datagram)
ReceiveHandler = Callable[[str, str, bytes], None]


class EmuNode:
    def __init__(
        self,
        env: simpy.Environment,
        node_id: str,
        site: str,
        vcpus: float,
        per_vcpu_rate_mbps: float,
        crypto_rate_mbps: float,
    ):
        if vcpus <= 0:
            raise ValueError(f"node {node_id}: vcpus must be positive")
        self.id = node_id
        self.site = site
        self.vcpus = vcpus
        self.per_vcpu_rate_mbps = per_vcpu_rate_mbps
        self.crypto_rate_mbps = crypto_rate_mbps
        self.interfaces: Dict[str, EmuLink] = {}
        self.cpu = FairQueue(env)
        self.handler: Optional[ReceiveHandler] = None
        self.received_frames = 0

    @property
    def processing_rate_mbps(self) -> float:
        return self.vcpus * self.per_vcpu_rate_mbps

    def processing_us(self, wire_bytes: int) -> float:
        return wire_bytes * 8 / self.processing_rate_mbps

    def crypto_us(self, wire_bytes: int) -> float:
        """Cost of sealing or opening one frame of wire_bytes on this node."""
        return wire_bytes * 8 / (self.crypto_rate_mbps * self.vcpus)

    def attach(self, interface: str, link: EmuLink) -> None:
        self.interfaces[interface] = link

    def detach(self, interface: str) -> Optional[EmuLink]:
        return self.interfaces.pop(interface, None)

    def deliver(self, interface: str, src: str, payload: bytes) -> None:
        self.received_frames += 1
        if self.handler is None:
            logger.debug(f"{self.id}: no handler, dropping frame from {src} on {interface}")
            return
        self.handler(interface, src, payload)
