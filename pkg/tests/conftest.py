import numpy as np
import pytest

from renyi_bvn.cli import load_dataset
from renyi_bvn.estimator import PairedSample
from renyi_bvn.model import Theta
from renyi_bvn.statfns import RngStream, sample_bvn

FIGURE_THETA = Theta(1.0, 2.0, 1.0, 1.5, 0.3)


@pytest.fixture
def cork_log():
    return PairedSample.from_array(np.log(load_dataset("cork")))


def gaussian_sample(seed, n=50, theta=FIGURE_THETA):
    return PairedSample.from_array(sample_bvn(theta, n, RngStream(seed)))


ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
