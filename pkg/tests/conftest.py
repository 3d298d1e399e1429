import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gdcert.problems import CATALOG, make_problem

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def quadratic():
    return make_problem("quadratic")


@pytest.fixture
def cubic():
    return make_problem("cubic_saddle")


@pytest.fixture
def quartic():
    return make_problem("negative_quartic")


@pytest.fixture
def scalar_fact():
    return make_problem("scalar_factorization")


@pytest.fixture(params=CATALOG)
def any_problem(request):
    if request.param == "matrix_factorization":
        rng = np.random.default_rng(3)
        return make_problem("matrix_factorization", M=rng.standard_normal((2, 3)), r=2)
    return make_problem(request.param)


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is not None and acc.SUMMARY_LINES:
        SUMMARY_LINES = acc.SUMMARY_LINES
        terminalreporter.section("acceptance criteria")
        for line in SUMMARY_LINES:
            terminalreporter.write_line(line)
        passed = sum(line.startswith("[PASS]") for line in SUMMARY_LINES)
        terminalreporter.write_line(f"{passed}/{len(SUMMARY_LINES)} criteria passed")
