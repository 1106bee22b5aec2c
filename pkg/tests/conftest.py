import os

import pytest
from hypothesis import HealthCheck, settings

from dhpeak.core import Constants
from dhpeak.synthgen import GenSpec, generate

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def c116():
    return Constants.with_rho_cp(1.16)


@pytest.fixture(scope="session")
def synthetic_year():
    return generate(GenSpec())


@pytest.fixture(scope="session")
def synthetic_month():
    return generate(GenSpec(days=28, seed=7))


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.report_lines():
        terminalreporter.write_line(line)
