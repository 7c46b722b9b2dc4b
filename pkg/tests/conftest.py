import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from flowdmd import evaluation as ev  # noqa: E402

PLANTED_SPECTRUM = (
    0.97 * np.exp(0.5j), 0.97 * np.exp(-0.5j),
    0.9 * np.exp(1.3j), 0.9 * np.exp(-1.3j),
    0.85, 0.6,
)


@pytest.fixture
def planted():
    return ev.PlantedSystem.random(64, PLANTED_SPECTRUM, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def dataset_dir():
    path = os.environ.get("FLOWDMD_DATA")
    return Path(path) if path else None


# --- acceptance summary ----------------------------------------------------

_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(text): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().user_properties.append(("criterion", marker.args[0]))


def pytest_runtest_logreport(report):
    criterion = dict(report.user_properties).get("criterion")
    if criterion is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = report.outcome.upper()
        if outcome == "PASSED":
            outcome = "PASS"
        elif outcome == "FAILED":
            outcome = "FAIL"
        else:
            outcome = "SKIP"
        _CRITERIA.append((outcome, criterion))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for outcome, criterion in _CRITERIA:
        terminalreporter.write_line(f"{outcome:<5} {criterion}")
