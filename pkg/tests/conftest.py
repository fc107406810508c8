import math

import numpy as np
import pytest
from hypothesis import settings
from scipy.integrate import solve_ivp

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


def ode_time_to_lambda(L, gamma, lam):
    """Independent oracle: integrate the clock ODE from 1/lam until it reaches lam."""
    def rhs(t, y):
        return [-2.0 * L * y[0] - gamma * (y[0] ** 2 + 1.0)]

    def hit(t, y):
        return y[0] - lam
    hit.terminal = True
    hit.direction = -1
    # the clock reaches lam in at most the gamma=0 time scale bound below
    t_max = 10.0 / min(L, gamma) + 10.0
    sol = solve_ivp(rhs, (0.0, t_max), [1.0 / lam], events=hit, rtol=1e-12, atol=1e-14,
                    method="DOP853", dense_output=True)
    return float(sol.t_events[0][0]), sol


@pytest.fixture(scope="session")
def case_override():
    from dosetc.config import case_study_config
    return case_study_config("override")


@pytest.fixture(scope="session")
def case_derived():
    from dosetc.config import case_study_config
    return case_study_config("derived")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def isclose(a, b, rel=0.0, abs_=0.0):
    return math.isclose(a, b, rel_tol=rel, abs_tol=abs_)


OVERRIDE_NET = {"phi_miet_mode": "override", "phi_miet0": 1.928, "phi_miet1": 0.6869}


def frozen_config(block_sizes=(2,), protocol="sampled-data", nodes=None, x0=None, e0=None,
                  **sim):
    from dosetc.config import from_dict
    nets = []
    for i, b in enumerate(block_sizes):
        d = dict(OVERRIDE_NET, protocol=protocol)
        if nodes is not None:
            d["nodes"] = list(nodes[i])
        nets.append(d)
    plant = {"kind": "frozen", "block_sizes": list(block_sizes)}
    if x0 is not None:
        plant["x0"] = list(x0)
    if e0 is not None:
        plant["e0"] = list(e0)
    return from_dict({"networks": nets, "plant": plant, "sim": sim})


@pytest.fixture(scope="session")
def case_system(case_override):
    from dosetc.config import build_system
    return build_system(case_override)
