import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from crossgram.encoder import Encoder  # noqa: E402
from crossgram.imageio import read_png  # noqa: E402

DATA = os.path.join(os.path.dirname(__file__), "data")

ACCEPTANCE_LINES = []


def data_path(*parts):
    return os.path.join(DATA, *parts)


@pytest.fixture(scope="session")
def tiny_encoder():
    return Encoder.load(data_path("tiny_encoder.cgwt"))


@pytest.fixture(scope="session")
def tiny_encoder64(tiny_encoder):
    return tiny_encoder.astype(np.float64)


@pytest.fixture(scope="session")
def style_png():
    return read_png(data_path("style.png"))


@pytest.fixture(scope="session")
def content_png():
    return read_png(data_path("content.png"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
