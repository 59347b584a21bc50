import numpy as np
import pytest

from pde_forge import synthetic
from pde_forge.differentiation import build_token_cache
from pde_forge.equation_ea.token_pool import Chromosome, Factor, Term, derivative_family, trig_family
from pde_forge.grid_core import Dataset, Grid


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run acceptance-scale tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_grid():
    return Grid(("t", "x"), (10, 12), (0.0, 0.0), (0.1, 0.25))


@pytest.fixture(scope="session")
def small_dataset(small_grid):
    t, x = small_grid.mesh()
    return Dataset.from_arrays(small_grid, {"u": np.sin(x) * np.exp(-t), "v": np.cos(x) + t})


@pytest.fixture(scope="session")
def small_cache(small_dataset):
    return build_token_cache(small_dataset)


@pytest.fixture(scope="session")
def u_family():
    return derivative_family("u", ("t", "x"), max_order=3, max_power=2)


@pytest.fixture(scope="session")
def v_family():
    return derivative_family("v", ("t", "x"), max_order=3, max_power=2)


@pytest.fixture(scope="session")
def sine_family():
    return trig_family(("t", "x"), (0.5, 4.0), max_power=2, axis=1)


@pytest.fixture(scope="session")
def heat_spec():
    return synthetic.default_spec("heat1d")


@pytest.fixture(scope="session")
def heat_dataset(heat_spec):
    return synthetic.generate(heat_spec)


@pytest.fixture(scope="session")
def heat_cache(heat_spec):
    return synthetic.analytic_derivatives(heat_spec)


def derivative_term(family, axis: int, order: int, power: int = 1) -> Term:
    return Term.build([Factor.create(family, axis=axis, order=order, power=power)])


@pytest.fixture(scope="session")
def heat_chromosome(u_family):
    """ u_t and u_xx, the exact heat equation """
    return Chromosome((derivative_term(u_family, 0, 1), derivative_term(u_family, 1, 2)))


@pytest.fixture(scope="session")
def make_term():
    return derivative_term
