import numpy as np
import pytest

from rbpca import gen_numerical_example, zscore_apply, zscore_fit


@pytest.fixture(scope="session")
def train_stream():
    return gen_numerical_example(1000, seed=11)


@pytest.fixture(scope="session")
def small_normalized():
    X = gen_numerical_example(200, seed=0).X
    return zscore_apply(X, *zscore_fit(X))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
