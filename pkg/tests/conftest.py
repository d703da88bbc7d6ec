import numpy as np
import pytest

from mcode.dataset import Dataset
from mcode.synthetic import make_multilabel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_dataset():
    X = np.array([[0.5, -1.25], [2.0, 3.0], [-0.125, 7.5]])
    Y = np.array([[1, 0], [0, 0], [1, 1]])
    return Dataset(X, Y, ["f a", "f_b"], ["lab1", "lab2"], "tiny")


@pytest.fixture(scope="session")
def synth():
    return make_multilabel(400, m=8, d=5, seed=7)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
