from fractions import Fraction

import pytest
from hypothesis import settings

from flathilbert.kernel import KernelSpec
from flathilbert.measures import redistributed_closed_form, sigma_dot

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def flat_kernel():
    return KernelSpec(n=16, rho=Fraction(3, 4))


@pytest.fixture(scope="session")
def hilbert_kernel():
    return KernelSpec.hilbert(16)


@pytest.fixture(scope="session")
def omega8():
    return redistributed_closed_form(16, 8)


@pytest.fixture(scope="session")
def sigma6():
    return sigma_dot(16, 6)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
