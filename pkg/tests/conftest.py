import os
import random

import pytest

from config import Settings
from netem.fabric import Fabric
from orchestrator.engine import Orchestrator
from orchestrator.handler import register_lab

EPS_PACKAGE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "packages", "eps")


class SeededBytes:
    """Deterministic random-bytes source for keys and indices."""

    def __init__(self, seed: int = 7):
        self._rng = random.Random(seed)

    def __call__(self, n: int) -> bytes:
        return self._rng.randbytes(n)


@pytest.fixture
def rng():
    return SeededBytes()


@pytest.fixture
def settings():
    return Settings()


@pytest.fixture
def fabric(settings):
    f = Fabric(settings, seed=3)
    f.add_site("vim1")
    return f


@pytest.fixture
def eps_package_path():
    return EPS_PACKAGE


@pytest.fixture
def make_testbed():
    """Onboarded two-site lab; keyword arguments override settings fields."""

    def make(capture: bool = True, seed: int = 1, **overrides) -> Orchestrator:
        orchestrator = register_lab(Orchestrator(settings=Settings(**overrides), seed=seed, capture=capture))
        orchestrator.onboard(EPS_PACKAGE)
        return orchestrator

    return make


@pytest.fixture
def testbed(make_testbed):
    return make_testbed()
