import numpy as np
import pytest

from vnmix import make_algebra

WEIGHT_POOL = (1.0, 0.5, 0.3, 0.7, 0.25, 2.0, 1.5)


def random_algebra(rng, max_blocks=3, max_dim=6, irrational=False):
    k = int(rng.integers(1, max_blocks + 1))
    dims = [int(rng.integers(1, max_dim + 1)) for _ in range(k)]
    if irrational:
        weights = list(rng.uniform(0.1, 2.0, size=k))
    else:
        weights = [WEIGHT_POOL[int(i)] for i in rng.integers(len(WEIGHT_POOL), size=k)]
    return make_algebra(dims, weights)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
