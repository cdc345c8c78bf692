import numpy as np
import pytest

from lnaepi import ObsParams, Params, corrupt, get_model, simulate_mjp

import oracles

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def removal_case():
    """Pure-removal SIR (beta = 0) with gaussian-observed removals.

    Returns ``(model, params, y)`` with 8 unit-length windows.
    """
    model = get_model("sir", oracles.I0)
    obs = ObsParams("gaussian", sigma2=oracles.SIGMA2, target="removals")
    params = Params(gamma=oracles.GAMMA, beta=0.0, x0=(0, oracles.I0), obs=obs)
    path = simulate_mjp(model, params, oracles.T * oracles.DELTA, oracles.DELTA, rng_seed=11)
    y = corrupt(path.grid_incidence, obs, 12).astype(float)
    return model, params, y


@pytest.fixture(scope="session")
def d1_case():
    """D1-style SIR with Binomial-reported infections in 8 windows of 10."""
    model = get_model("sir", 120)
    obs = ObsParams("binomial", lam=0.8, target="infections")
    params = Params(gamma=0.082, beta=0.00091, x0=(119, 1), obs=obs)
    path = simulate_mjp(model, params, 80.0, 10.0, rng_seed=5)
    y = corrupt(path.grid_incidence, obs, 6).astype(float)
    return model, params, y


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
