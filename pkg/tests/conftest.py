import numpy as np
import pytest
from hypothesis import settings

from dualdrag.gatecal import calibrate, driven_for, initial_calibration
from dualdrag.model import ModeSpec, SystemSpec, two_mode_system

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def isolated_transmon():
    return SystemSpec((ModeSpec("Q0", "transmon", 3.76, -194.6, 3),))


@pytest.fixture(scope="session")
def coupled_pair():
    """g = 1 MHz, spectator 45 MHz above, 3-level transmons."""
    return two_mode_system(g_mhz=1.0, detuning_mhz=45.0)


@pytest.fixture(scope="session")
def calibrated_alpha(coupled_pair):
    cal = initial_calibration(coupled_pair, "Q0", 25.0, (-194.6,))
    driven = driven_for(coupled_pair, "Q0", cal)
    return driven, calibrate(driven, cal)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
CRITERIA = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
