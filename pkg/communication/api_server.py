"""
API server for sliceguard using FastAPI.
"""
import logging
import time
from typing import Any, Dict, List, Optional

import uvicorn
from fastapi import Body, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from bench.errors import BenchError, UnknownScenario
from bench.kpi import KpiThresholds, kpi_check
from bench.report import BenchReport
from bench.scenarios import run_scenario
from bench.stats import ProbeStats
from config import get_settings
from descriptors.errors import DescriptorError
from descriptors.parser import load_package
from eps.errors import EpsError
from netem.errors import NetemError
from orchestrator.errors import OrchestratorError, UnknownNs, UnknownUnit, ValidationFailed
from orchestrator.handler import get_orchestrator
from tunnel.errors import TunnelError

logger = logging.getLogger(__name__)

VERSION = "1.0.0"

# Create FastAPI app
app = FastAPI(
    title="sliceguard API",
    description="Onboard EPS descriptors, run tunneled network services and slices, and benchmark them",
    version=VERSION,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

DOMAIN_ERRORS = (OrchestratorError, BenchError, EpsError, NetemError, TunnelError, DescriptorError, OSError, ValueError)


class HealthResponse(BaseModel):
    """Response model for health endpoint."""
    status: str
    version: str
    uptime: float


class PackageRequest(BaseModel):
    """A descriptor package directory on the server."""
    path: str


class FindingModel(BaseModel):
    path: str
    code: str
    message: str


class ValidateResponse(BaseModel):
    valid: bool
    findings: List[FindingModel] = Field(default_factory=list)


class CatalogEntryModel(BaseModel):
    kind: str
    id: str
    version: int
    digest: str


class NsRequest(BaseModel):
    nsd_id: str
    placement: Dict[str, str] = Field(default_factory=dict)
    wireguard: bool = True
    flavor_multiplier: Optional[float] = None


class NsiRequest(BaseModel):
    nst_id: str
    placement: Dict[str, str] = Field(default_factory=dict)
    flavor_multiplier: Optional[float] = None


class ActionRequest(BaseModel):
    unit: str
    action: str
    params: Dict[str, Any] = Field(default_factory=dict)


class TapScanRequest(BaseModel):
    needle: str
    site_view: bool = False


class BenchRunRequest(BaseModel):
    scenario: str
    seed: Optional[int] = None
    overrides: Dict[str, Any] = Field(default_factory=dict)


class KpiRequest(BaseModel):
    stats: List[ProbeStats]
    thresholds: Optional[KpiThresholds] = None


# Track start time for uptime calculation
start_time = time.time()


def _fail(e: Exception) -> HTTPException:
    if isinstance(e, (UnknownNs, UnknownUnit)):
        return HTTPException(status_code=404, detail=str(e))
    logger.error(f"Error processing API request: {e}")
    return HTTPException(status_code=400, detail=str(e))


@app.get("/health", response_model=HealthResponse)
async def health():
    """Health check endpoint."""
    return HealthResponse(status="ok", version=VERSION, uptime=time.time() - start_time)


@app.post("/validate", response_model=ValidateResponse)
def validate(request: PackageRequest = Body(...)):
    try:
        findings = get_orchestrator().validate(load_package(request.path))
    except DOMAIN_ERRORS as e:
        raise _fail(e)
    return ValidateResponse(valid=not findings, findings=[FindingModel(**f.model_dump()) for f in findings])


@app.post("/onboard", response_model=List[CatalogEntryModel])
def onboard(request: PackageRequest = Body(...)):
    try:
        entries = get_orchestrator().onboard(request.path)
    except ValidationFailed as e:
        raise HTTPException(status_code=400, detail=[str(f) for f in e.findings])
    except DOMAIN_ERRORS as e:
        raise _fail(e)
    return [CatalogEntryModel(**entry.model_dump()) for entry in entries]


@app.post("/ns")
def create_ns(request: NsRequest = Body(...)):
    """Instantiate a network service through Day-0 and Day-1; returns it once ready."""
    try:
        ns = get_orchestrator().instantiate_ns(
            request.nsd_id, request.placement, wireguard=request.wireguard,
            flavor_multiplier=request.flavor_multiplier,
        )
    except DOMAIN_ERRORS as e:
        raise _fail(e)
    return ns.describe()


@app.post("/nsi")
def create_nsi(request: NsiRequest = Body(...)):
    orchestrator = get_orchestrator()
    try:
        nsi = orchestrator.instantiate_nsi(request.nst_id, request.placement, request.flavor_multiplier)
    except DOMAIN_ERRORS as e:
        raise _fail(e)
    return nsi.describe()


@app.get("/ns")
def list_ns():
    return get_orchestrator().describe()


@app.get("/ns/{ns_id}")
def show_ns(ns_id: str):
    try:
        return get_orchestrator().ns(ns_id).describe()
    except DOMAIN_ERRORS as e:
        raise _fail(e)


@app.post("/ns/{ns_id}/actions")
def run_action(ns_id: str, request: ActionRequest = Body(...)):
    try:
        result = get_orchestrator().run_action(ns_id, request.unit, request.action, request.params)
    except DOMAIN_ERRORS as e:
        raise _fail(e)
    return {"ns": ns_id, "unit": request.unit, "action": request.action, "result": result}


@app.get("/ns/{ns_id}/relations")
def relations(ns_id: str):
    orchestrator = get_orchestrator()
    try:
        ns = orchestrator.ns(ns_id)
    except DOMAIN_ERRORS as e:
        raise _fail(e)
    bags = orchestrator.bus.bags()
    return {
        relation_id: {
            "state": orchestrator.bus.relation(relation_id).state.value,
            "bags": {unit: dict(bag.entries) for unit, bag in bags.get(relation_id, {}).items()},
        }
        for relation_id in ns.relations
    }


@app.post("/ns/{ns_id}/tap-scan")
def tap_scan(ns_id: str, request: TapScanRequest = Body(...)):
    try:
        counts = get_orchestrator().tap_scan(ns_id, request.needle, site_view=request.site_view)
    except DOMAIN_ERRORS as e:
        raise _fail(e)
    return {"needle": request.needle, "matches": counts}


@app.delete("/ns/{ns_id}")
def terminate(ns_id: str):
    try:
        phase = get_orchestrator().terminate(ns_id)
    except DOMAIN_ERRORS as e:
        raise _fail(e)
    return {"id": ns_id, "phase": phase.value}


@app.post("/bench/run", response_model=BenchReport)
def bench_run(request: BenchRunRequest = Body(...)):
    """Run a built-in scenario on its own lab; the shared orchestrator is left untouched."""
    try:
        return run_scenario(request.scenario, request.overrides, seed=request.seed,
                            settings=get_orchestrator().settings)
    except UnknownScenario as e:
        raise HTTPException(status_code=404, detail=str(e))
    except DOMAIN_ERRORS as e:
        raise _fail(e)


@app.post("/bench/kpi")
def bench_kpi(request: KpiRequest = Body(...)):
    thresholds = request.thresholds or KpiThresholds.from_settings()
    return {"thresholds": thresholds.model_dump(), "verdicts": kpi_check(request.stats, thresholds)}


def start_api_server():
    """Start the FastAPI server."""
    settings = get_settings()
    host, port = settings.api_host, settings.api_port

    logger.info(f"Starting API server on {host}:{port}")
    try:
        uvicorn.run(app, host=host, port=port, log_level=settings.log_level.lower())
    except Exception as e:
        logger.error(f"Error starting API server: {e}", exc_info=True)
        raise
