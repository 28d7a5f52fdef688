import numpy as np
import pytest

from passivnet.lqr import solve_dare
from passivnet.microgrid import Microgrid, load_config
from passivnet.synthesis import synthesize


@pytest.fixture(scope="session")
def grid():
    return Microgrid(load_config())


@pytest.fixture(scope="session")
def lm_net(grid):
    return grid.lm_network()


@pytest.fixture(scope="session")
def exact(grid):
    return grid.exact_model()


@pytest.fixture(scope="session")
def lqr(exact):
    n, m = exact.B.shape
    return solve_dare(exact.A, exact.B, np.eye(n), np.eye(m))


@pytest.fixture(scope="session")
def syntheses(lm_net, lqr):
    """One synthesis per cost at the default eps values."""
    return {k: synthesize(lm_net, k, P_c=lqr.P_c) for k in "abc"}
