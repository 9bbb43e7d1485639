import copy

import pytest

from pfnegf.config import parse_config, reference_config
from pfnegf.grid import TimeGrid
from pfnegf.negf import KernelEngine
from pfnegf.thermal import gibbs


def dimer_config():
    """1-site sample + 1-site lead, noninteracting, unbiased: h = [[0, tau], [tau, 0]]."""
    return {
        "sample": {"sites": ["s0"], "hoppings": [], "w": [], "xi": 0.0},
        "leads": [
            {"sites": ["l0"], "hoppings": [], "coupling": {"d": 0.7, "f": [1.0], "g": [1.0]}}
        ],
        "bias": [0.0],
        "thermal": {"beta": 1.0, "mu": 0.0},
        "grid": {"T": 3.0, "steps": 30},
        "tasks": ["g0"],
    }


def trimer_config():
    """2-site interacting sample + one 1-site lead: the cheapest interacting model."""
    return {
        "sample": {
            "sites": ["s0", "s1"],
            "hoppings": [["s0", "s1", 1.0]],
            "w": [["s0", "s1", 1.0]],
            "xi": 0.7,
        },
        "leads": [
            {"sites": ["l0"], "hoppings": [], "coupling": {"d": 0.6, "f": [1.0], "g": [1.0, 0.0]}}
        ],
        "bias": [0.3],
        "thermal": {"beta": 1.0, "mu": 0.2},
        "grid": {"T": 3.0, "steps": 24},
        "tasks": ["verify"],
    }


@pytest.fixture(scope="session")
def reference_run():
    return parse_config(reference_config())


@pytest.fixture(scope="session")
def reference_rho(reference_run):
    model = reference_run.model
    return gibbs(model.K_0, reference_run.thermal, model.N_total, label="pf")


def _engine(run, rho, steps):
    return KernelEngine(
        run.model, run.thermal, TimeGrid(run.horizon, steps), rho=rho, full_correlator=True
    )


@pytest.fixture(scope="session")
def ref_engine_25(reference_run, reference_rho):
    return _engine(reference_run, reference_rho, 25)


@pytest.fixture(scope="session")
def ref_engine_50(reference_run, reference_rho):
    return _engine(reference_run, reference_rho, 50)


@pytest.fixture(scope="session")
def ref_engine_100(reference_run, reference_rho):
    return _engine(reference_run, reference_rho, 100)


@pytest.fixture(scope="session")
def trimer_run():
    return parse_config(trimer_config())


@pytest.fixture(scope="session")
def trimer_engine(trimer_run):
    return KernelEngine(trimer_run.model, trimer_run.thermal, trimer_run.grid())


@pytest.fixture()
def dimer_dict():
    return copy.deepcopy(dimer_config())


@pytest.fixture()
def trimer_dict():
    return copy.deepcopy(trimer_config())
