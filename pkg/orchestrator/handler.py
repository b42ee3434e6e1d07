"""
Handler module for the sliceguard orchestrator.
Manages orchestrator initialization for the CLI shell and the API.
"""
import logging
from typing import Optional

from config import Settings, get_settings

from .engine import Orchestrator
from .vim import SiteConfig

logger = logging.getLogger(__name__)

LAB_SITES = (
    SiteConfig(id="vim1", vcpus=56, ram_gb=126, storage_gb=915,
               internal_subnet="192.168.10.0/24", floating_pool="172.24.4.0/24"),
    SiteConfig(id="vim2", vcpus=9, ram_gb=32, storage_gb=150,
               internal_subnet="192.168.20.0/24", floating_pool="172.24.5.0/24"),
)
INTERSITE_CAPACITY_MBPS = 180.0
INTERSITE_DELAY_MS = 9.18

# Singleton instance of the orchestrator
_orchestrator_instance: Optional[Orchestrator] = None


def register_lab(orchestrator: Orchestrator, site_tunnel: bool = True) -> Orchestrator:
    """Register the two lab sites and the link between them."""
    for site in LAB_SITES:
        orchestrator.register_vim(site)
    orchestrator.configure_intersite("vim1", "vim2", INTERSITE_CAPACITY_MBPS, INTERSITE_DELAY_MS, site_tunnel)
    return orchestrator


def build_orchestrator(settings: Optional[Settings] = None, seed: Optional[int] = None,
                       capture: bool = False) -> Orchestrator:
    return register_lab(Orchestrator(settings=settings, seed=seed, capture=capture))


def get_orchestrator() -> Orchestrator:
    """
    Get or create the orchestrator singleton instance.
    Uses lazy initialization so the lab sites are only registered when first needed.
    """
    global _orchestrator_instance

    if _orchestrator_instance is None:
        logger.info("Initializing sliceguard orchestrator")
        _orchestrator_instance = build_orchestrator(get_settings(), capture=True)

    return _orchestrator_instance


def reset_orchestrator() -> None:
    global _orchestrator_instance
    _orchestrator_instance = None
