import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", deadline=None, max_examples=150, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def two_sphere():
    from hsh.scenarios import build_two_sphere

    return build_two_sphere(impact_parameter=0.3)


@pytest.fixture(scope="session")
def spectator():
    from hsh.scenarios import build_two_sphere

    return build_two_sphere(impact_parameter=0.3, spectator=True)


@pytest.fixture(scope="session")
def golden():
    from hsh.scenarios import golden_three_sphere

    return golden_three_sphere()


# filled by tests/test_acceptance.py, echoed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{ACCEPTANCE[k]} criterion {k}")
