"""
KPI verdicts: URLLC latency and eMBB downlink rate.
"""
import logging
from typing import Dict, Iterable, Optional

from pydantic import BaseModel, Field

from config import get_settings

from .stats import ProbeStats

logger = logging.getLogger(__name__)

PASS = "pass"
FAIL = "fail"
NOT_EVALUATED = "not-evaluated"

# Links whose latency counts against the URLLC budget; Uu is a radio stand-in.
LATENCY_INTERFACES = ("S1-C", "S1-U", "S6a", "S11", "Sx")
THROUGHPUT_INTERFACE = "S1-U"


class KpiThresholds(BaseModel):
    urllc_latency_ms: float = Field(default=1.0, gt=0)
    embb_dl_mbps: float = Field(default=100.0, gt=0)

    @classmethod
    def from_settings(cls) -> "KpiThresholds":
        settings = get_settings()
        return cls(urllc_latency_ms=settings.urllc_latency_ms, embb_dl_mbps=settings.embb_dl_mbps)


def _applies(stats: ProbeStats, slice_type: str) -> bool:
    return stats.slice is None or stats.slice == slice_type


def kpi_check(stats: Iterable[ProbeStats], thresholds: Optional[KpiThresholds] = None) -> Dict[str, str]:
    """
    Latency passes when every targeted mean is below the budget, throughput when every targeted
    mean reaches the rate. A threshold with no matching statistics is not evaluated.
    """
    thresholds = thresholds or KpiThresholds()
    stats = list(stats)

    latency = [s for s in stats if s.metric == "latency" and s.interface in LATENCY_INTERFACES
               and _applies(s, "urllc")]
    throughput = [s for s in stats if s.metric == "throughput" and s.interface == THROUGHPUT_INTERFACE
                  and _applies(s, "embb")]

    verdicts = {
        "urllc_latency_ms": NOT_EVALUATED,
        "embb_dl_mbps": NOT_EVALUATED,
    }
    if latency:
        ok = all(s.mean < thresholds.urllc_latency_ms for s in latency)
        verdicts["urllc_latency_ms"] = PASS if ok else FAIL
    if throughput:
        ok = all(s.mean >= thresholds.embb_dl_mbps for s in throughput)
        verdicts["embb_dl_mbps"] = PASS if ok else FAIL
    logger.debug(f"KPI verdicts: {verdicts}")
    return verdicts
