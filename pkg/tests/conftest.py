from pathlib import Path

import numpy as np
import pytest

from smdpopt.model import load_model

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data():
    return DATA


@pytest.fixture
def two_state():
    return load_model(DATA / "two_state.json")


@pytest.fixture
def choice():
    return load_model(DATA / "choice.json")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
