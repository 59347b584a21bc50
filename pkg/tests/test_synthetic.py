import numpy as np
import pytest

from pde_forge import constants, synthetic
from pde_forge.errors import ArgumentError, ConfigurationError


@pytest.fixture(scope="module")
def small_tg_spec():
    return synthetic.SynthSpec("taylor_green", {"nu": 0.1, "rho": 2.0}, (10, 12, 12), (0.0, 0.0, 0.0),
                               (constants.TIME_STEP, constants.TWO_PI / 12, constants.TWO_PI / 12))


def test_default_specs():
    heat = synthetic.default_spec("heat1d", alpha=0.5)
    assert heat.params == {"alpha": 0.5, "k": 2.0, "a2": 0.0, "k2": 3.0}
    assert heat.grid.shape == constants.HEAT_SHAPE
    assert synthetic.default_spec("taylor_green").dim_names == ("t", "x", "y")


@pytest.mark.parametrize("build", [
    lambda: synthetic.default_spec("burgers"),
    lambda: synthetic.default_spec("heat1d", nu=1.0),
    lambda: synthetic.default_spec("heat1d", noise_std=-0.1),
    lambda: synthetic.default_spec("heat1d", alpha=-1.0),
    lambda: synthetic.default_spec("taylor_green", rho=0.0),
    lambda: synthetic.SynthSpec("advection1d", {"c": 1.0}, (16, 16), (0.0, 0.0), (0.1, 0.1)),
    lambda: synthetic.SynthSpec("advection1d", {"c": 1.0, "k": 1.0}, (16, 2), (0.0, 0.0), (0.1, 0.1)),
])
def test_invalid_specs(build):
    with pytest.raises(ConfigurationError):
        build()


def test_generated_heat_matches_closed_form(heat_spec, heat_dataset):
    t, x = heat_spec.grid.mesh()
    expected = np.exp(-4.0 * t) * np.sin(2.0 * x)
    np.testing.assert_allclose(heat_dataset.field("u").as_array(), expected, atol=1e-14)


def test_second_mode_is_added():
    spec = synthetic.default_spec("heat1d", a2=0.5, k2=3.0)
    t, x = spec.grid.mesh()
    expected = np.exp(-4.0 * t) * np.sin(2.0 * x) + 0.5 * np.exp(-9.0 * t) * np.sin(3.0 * x)
    np.testing.assert_allclose(synthetic.generate(spec).field("u").as_array(), expected, atol=1e-14)


def test_noise_is_multiplicative_and_seeded():
    spec = synthetic.default_spec("advection1d", noise_std=0.05)
    a = synthetic.generate(spec, np.random.default_rng(1)).field("u").values
    b = synthetic.generate(spec, np.random.default_rng(1)).field("u").values
    clean = synthetic.generate(synthetic.default_spec("advection1d")).field("u").values
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, clean)
    np.testing.assert_array_equal(a[clean == 0.0], 0.0)


def test_analytic_heat_derivatives(heat_spec, heat_cache):
    u = heat_cache["u"]
    np.testing.assert_allclose(heat_cache["d1u/dt1"], -4.0 * u, atol=1e-12)
    np.testing.assert_allclose(heat_cache["d2u/dx2"], -4.0 * u, atol=1e-12)
    np.testing.assert_allclose(heat_cache["d3u/dx3"], -4.0 * heat_cache["d1u/dx1"], atol=1e-12)
    assert heat_cache.entry("d2u/dx2").axis == 1


def test_taylor_green_satisfies_its_equations(small_tg_spec):
    cache = synthetic.analytic_derivatives(small_tg_spec, max_order=2)
    nu, rho = 0.1, 2.0
    u, v = cache["u"], cache["v"]
    momentum_x = (cache["d1u/dt1"] + u * cache["d1u/dx1"] + v * cache["d1u/dy1"]
                  + cache["d1p/dx1"] / rho - nu * (cache["d2u/dx2"] + cache["d2u/dy2"]))
    momentum_y = (cache["d1v/dt1"] + u * cache["d1v/dx1"] + v * cache["d1v/dy1"]
                  + cache["d1p/dy1"] / rho - nu * (cache["d2v/dx2"] + cache["d2v/dy2"]))
    continuity = cache["d1u/dx1"] + cache["d1v/dy1"]
    for residual in (momentum_x, momentum_y, continuity):
        assert np.max(np.abs(residual)) < 1e-12


def test_analytic_cache_layout(small_tg_spec):
    cache = synthetic.analytic_derivatives(small_tg_spec, max_order=1)
    assert cache.variables == ("u", "v", "p")
    assert len(cache) == 3 * (1 + 3)
    with pytest.raises(ArgumentError):
        synthetic.analytic_derivatives(small_tg_spec, max_order=0)


def test_ground_truth_lines():
    assert synthetic.ground_truth(synthetic.default_spec("heat1d", alpha=0.5)) == ["d1u/dt1 = 0.5 * d2u/dx2"]
    assert synthetic.ground_truth(synthetic.default_spec("advection1d", c=2.0)) == ["d1u/dt1 = -2 * d1u/dx1"]
    assert len(synthetic.ground_truth(synthetic.default_spec("taylor_green"))) == 3


def test_static_field(heat_dataset):
    grid = heat_dataset.grid
    constant = synthetic.with_static_field(heat_dataset, "p", 2.0)
    assert constant.variable_names == ("u", "p")
    assert np.all(constant.field("p").values == 2.0)

    profile = np.linspace(0.0, 1.0, grid.shape[1])
    extended = synthetic.with_static_field(heat_dataset, "q", profile)
    values = extended.field("q").as_array()
    np.testing.assert_array_equal(values[0], profile)
    np.testing.assert_array_equal(values[-1], profile)
    with pytest.raises(ArgumentError):
        synthetic.with_static_field(heat_dataset, "q", np.zeros(3))
