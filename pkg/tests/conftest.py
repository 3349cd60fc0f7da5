import numpy as np
import pytest

from epshape.algebra import exp_so3
from epshape.control import ClosedLoop, DesiredMotion, Gains
from epshape.systems import InertiaParams, SystemId


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def desk():
    return InertiaParams.desk_defaults()


@pytest.fixture
def coupled():
    """Desk parameters with a nonzero coupling block D."""
    return InertiaParams.desk_defaults(d_block=[[0.1, 0.0, 0.05], [0.0, 0.2, 0.0], [0.05, 0.0, 0.0]])


@pytest.fixture
def desired():
    return DesiredMotion(exp_so3([0.2, -0.3, 0.1]), [0.5, 0.0, 0.5])


@pytest.fixture
def stable_gains():
    # alpha * l = 25 / 9.81 > max eig M = 2;  l * beta > 0
    return Gains(25.0, 1.0, [[2.0, 0.0], [0.0, 1.0]])


def make_loop(params, controller, gains, desired, **kw):
    return ClosedLoop(params, SystemId.UnderwaterVehicle, controller, gains, desired, **kw)


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
