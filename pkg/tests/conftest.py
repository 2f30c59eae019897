import numpy as np
import pytest

from horoshear.lattice import bolza_group
from horoshear.observables import BumpSpec, build_observable, default_center, k_invariant_observable


@pytest.fixture(scope="session")
def group():
    return bolza_group()


@pytest.fixture(scope="session")
def kinv(group):
    """The default K-invariant observable, centered by quadrature."""
    return k_invariant_observable(group, center=0.3 + 1.2j, radius=1.0, label="f")


@pytest.fixture(scope="session")
def general(group):
    """A bump that depends on the frame as well as the surface point."""
    return build_observable(BumpSpec(default_center(group), 0.8), group, label="h")


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    def record(line):
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2])):
            terminalreporter.write_line(line)
