"""
EPS charm: starts the network function matching the VNFD and provisions HSS subscribers.
"""
import logging
from typing import Any, Callable, Dict, Optional

from eps.functions import Enb, Hss, Mme, NetworkFunction, SpgwC, SpgwU, Ue
from eps.subscribers import DEFAULT_IMSI, SubscriberRecord

from ..errors import ActionFailed
from ..unit import Unit
from .wireguard import WireguardCharm

logger = logging.getLogger(__name__)

SUBSCRIBER_FILE_SUFFIX = "subscribers.jsonl"


def _hss(unit: Unit) -> NetworkFunction:
    hss = Hss(unit.id, unit.fabric.clock, unit.fabric.random_bytes, unit.settings.hss_service_time_ms)
    for path, content in unit.day0.files.items():
        if path.endswith(SUBSCRIBER_FILE_SUFFIX):
            hss.subscribers.load_lines(content)
    return hss


FUNCTIONS: Dict[str, Callable[[Unit], NetworkFunction]] = {
    "hss": _hss,
    "mme": lambda unit: Mme(unit.id, unit.fabric.clock),
    "spgwc": lambda unit: SpgwC(unit.id, unit.fabric.clock),
    "spgwu": lambda unit: SpgwU(unit.id, unit.fabric.clock),
    "enb": lambda unit: Enb(unit.id, unit.fabric.clock),
    "ue": lambda unit: Ue(unit.id, unit.fabric.clock, DEFAULT_IMSI),
}


class EpsCharm(WireguardCharm):
    def __init__(self):
        super().__init__("eps")
        self.register("start-service", self.start_service)
        self.register("add-subscriber", self.add_subscriber)

    def start_service(self, unit: Unit, params: Dict[str, Any]) -> Dict[str, Any]:
        if unit.app is not None and unit.app.running:
            return {"service": unit.app.role, "started": False}
        factory: Optional[Callable[[Unit], NetworkFunction]] = FUNCTIONS.get(unit.vnfd.id)
        if factory is None:
            logger.info(f"{unit.id}: no network function for vnfd '{unit.vnfd.id}'")
            return {"service": None, "started": False}
        app = factory(unit)
        app.bind(unit.send)
        app.start()
        unit.app = app
        return {"service": app.role, "started": True}

    def add_subscriber(self, unit: Unit, params: Dict[str, Any]) -> Dict[str, Any]:
        if not isinstance(unit.app, Hss):
            raise ActionFailed(f"{unit.id} is not running an HSS")
        record = SubscriberRecord(**params)
        new = unit.app.subscribers.add(record)
        return {"imsi": record.imsi, "new": new}
