"""
Configuration for the sliceguard testbed.
Values come from environment variables (optionally loaded from a .env file).
"""
import logging
import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)

ENV_PREFIX = "SLICEGUARD_"


class Settings(BaseModel):
    """Tunable defaults of the emulator, orchestrator and measurement harness."""

    # netem
    per_vcpu_rate_mbps: float = Field(500.0, gt=0)
    crypto_rate_mbps: float = Field(2000.0, gt=0)
    underlay_mtu: int = Field(1500, gt=0)
    tunnel_inner_mtu: int = Field(1420, gt=0)
    underlay_header_bytes: int = Field(28, ge=0)
    site_fabric_mbps: float = Field(20000.0, gt=0)
    intra_site_capacity_mbps: float = Field(10000.0, gt=0)
    intra_site_delay_ms: float = Field(0.15, ge=0)
    gateway_vcpus: int = Field(4, ge=1)

    # orchestrator
    peering_timeout_s: float = Field(10.0, gt=0)
    handshake_retry_s: float = Field(5.0, gt=0)
    tunnel_pool: str = "10.200.0.0/16"
    base_listen_port: int = Field(51820, ge=1, le=65535)

    # tunnel
    rekey_after_s: float = Field(120.0, gt=0)
    reject_after_s: float = Field(180.0, gt=0)
    rekey_after_messages: int = Field(2**48, gt=0)
    persistent_keepalive_s: int = Field(0, ge=0)

    # eps
    hss_service_time_ms: float = Field(5.4, ge=0)
    attach_timeout_s: float = Field(5.0, gt=0)

    # bench
    latency_count: int = Field(1000, ge=1)
    latency_interval_ms: float = Field(1.0, ge=0)
    throughput_duration_s: float = Field(10.0, gt=0)
    inflight_frames: int = Field(1024, ge=1)
    urllc_latency_ms: float = Field(1.0, gt=0)
    embb_dl_mbps: float = Field(100.0, gt=0)
    embb_five_qi: int = Field(9, gt=0)
    urllc_five_qi: int = Field(82, gt=0)
    default_seed: int = 1

    # front-ends
    log_level: str = "INFO"
    api_host: str = "0.0.0.0"
    api_port: int = Field(8000, ge=1, le=65535)

    @classmethod
    def from_env(cls) -> "Settings":
        """Build settings from SLICEGUARD_* environment variables, falling back to defaults."""
        values = {}
        for name in cls.model_fields:
            raw = os.getenv(f"{ENV_PREFIX}{name.upper()}")
            if raw is not None:
                values[name] = raw
        return cls(**values)


_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """
    Get or create the settings singleton.
    The .env file is only read on first use.
    """
    global _settings

    if _settings is None:
        load_dotenv()
        _settings = Settings.from_env()
        logger.debug(f"Loaded settings: {_settings.model_dump()}")

    return _settings


def reset_settings() -> None:
    """Forget the cached settings so the next get_settings() re-reads the environment."""
    global _settings
    _settings = None
