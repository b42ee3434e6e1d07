"""
VIM handles: site capacity, resource accounting and internal/floating address pools.
"""
import ipaddress
import logging
from typing import Dict, Iterator, Optional

from pydantic import BaseModel, ConfigDict, Field

from .errors import InsufficientResources

logger = logging.getLogger(__name__)

RESOURCES = ("vcpus", "ram_gb", "storage_gb")


class SiteConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str = Field(min_length=1)
    vcpus: float = Field(gt=0)
    ram_gb: float = Field(gt=0)
    storage_gb: float = Field(gt=0)
    internal_subnet: str = "192.168.10.0/24"
    floating_pool: str = "172.24.4.0/24"
    fabric_mbps: Optional[float] = Field(default=None, gt=0)


class VimHandle:
    def __init__(self, config: SiteConfig):
        self.config = config
        self.site_id = config.id
        self.internal_subnet = ipaddress.ip_network(config.internal_subnet)
        self.floating_pool = ipaddress.ip_network(config.floating_pool)
        self.capacity: Dict[str, float] = {r: getattr(config, r) for r in RESOURCES}
        self._allocations: Dict[str, Dict[str, float]] = {}
        self.internal: Dict[str, str] = {}
        self.floating: Dict[str, str] = {}
        self._internal_hosts = self._hosts(self.internal_subnet, skip=9)
        self._floating_hosts = self._hosts(self.floating_pool, skip=9)
        self._released_internal: list = []
        self._released_floating: list = []

    @staticmethod
    def _hosts(network: ipaddress.IPv4Network, skip: int) -> Iterator[str]:
        for i, host in enumerate(network.hosts()):
            if i >= skip:
                yield str(host)

    @property
    def allocated(self) -> Dict[str, float]:
        return {r: sum(a[r] for a in self._allocations.values()) for r in RESOURCES}

    @property
    def available(self) -> Dict[str, float]:
        used = self.allocated
        return {r: self.capacity[r] - used[r] for r in RESOURCES}

    def check(self, demand: Dict[str, float]) -> None:
        available = self.available
        short = [r for r in RESOURCES if demand.get(r, 0) > available[r] + 1e-9]
        if short:
            detail = ", ".join(f"{r} {demand[r]:g} > {available[r]:g}" for r in short)
            raise InsufficientResources(f"site {self.site_id} cannot host the request: {detail}")

    def allocate(self, unit: str, demand: Dict[str, float]) -> None:
        self.check(demand)
        self._allocations[unit] = {r: float(demand.get(r, 0)) for r in RESOURCES}

    def release(self, unit: str) -> None:
        self._allocations.pop(unit, None)
        address = self.internal.pop(unit, None)
        if address:
            self._released_internal.append(address)
        address = self.floating.pop(unit, None)
        if address:
            self._released_floating.append(address)

    def assign_addresses(self, unit: str) -> None:
        """Give a unit one internal address and one floating address, both unique on the site."""
        try:
            self.internal[unit] = (self._released_internal.pop(0) if self._released_internal
                                   else next(self._internal_hosts))
            self.floating[unit] = (self._released_floating.pop(0) if self._released_floating
                                   else next(self._floating_hosts))
        except StopIteration:
            raise InsufficientResources(f"site {self.site_id} has no free addresses") from None

    def describe(self) -> Dict[str, object]:
        return {
            "site": self.site_id,
            "internal_subnet": str(self.internal_subnet),
            "floating_pool": str(self.floating_pool),
            "capacity": dict(self.capacity),
            "allocated": self.allocated,
            "floating": dict(self.floating),
        }
