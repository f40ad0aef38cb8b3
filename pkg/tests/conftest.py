import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from wgds.mesh import build_rect_mesh
from wgds.wgspace import WgDofMap, WgParams

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=15,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion id -> (passed, message); filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def dm4():
    return WgDofMap(build_rect_mesh(4), WgParams())


@pytest.fixture(scope="session")
def dm2():
    return WgDofMap(build_rect_mesh(2), WgParams())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {msg}")
