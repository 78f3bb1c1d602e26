from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import settings

from wbe.series import RegularSeries, ScatteredSeries

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

D0 = date(2021, 3, 1)  # a Monday


def reg(values, start=D0, step=1):
    return RegularSeries(start, step, tuple(float("nan") if v is None else float(v) for v in values))


def scat(offsets, values, start=D0):
    return ScatteredSeries(tuple(start + timedelta(days=int(o)) for o in offsets), tuple(values))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
