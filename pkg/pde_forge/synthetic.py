import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch

from pde_forge import constants
from pde_forge.differentiation import TokenCache, TokenEntry, token_key
from pde_forge.errors import ArgumentError, ConfigurationError, ShapeError
from pde_forge.grid_core import DataField, Dataset, Grid

logger = logging.getLogger(__name__)


def _heat1d(coords: dict, params: dict, xp) -> dict:
    t, x = coords["t"], coords["x"]
    alpha, k = params["alpha"], params["k"]
    u = xp.exp(-alpha * k ** 2 * t) * xp.sin(k * x)
    # Optional second mode; with a single mode u_t is also proportional to u
    a2, k2 = params.get("a2", 0.0), params.get("k2", 2.0 * k)
    if a2 != 0.0:
        u = u + a2 * xp.exp(-alpha * k2 ** 2 * t) * xp.sin(k2 * x)
    return {"u": u}


def _advection1d(coords: dict, params: dict, xp) -> dict:
    t, x = coords["t"], coords["x"]
    return {"u": xp.sin(params["k"] * (x - params["c"] * t))}


def _taylor_green(coords: dict, params: dict, xp) -> dict:
    t, x, y = coords["t"], coords["x"], coords["y"]
    nu, rho = params["nu"], params["rho"]
    decay = xp.exp(-2.0 * nu * t)
    return {
        "u": -xp.cos(x) * xp.sin(y) * decay,
        "v": xp.sin(x) * xp.cos(y) * decay,
        "p": -0.25 * rho * (xp.cos(2.0 * x) + xp.cos(2.0 * y)) * decay ** 2,
    }


# kind -> (axes, required params, closed-form fields); `xp` is numpy or torch
SOLUTIONS: dict[str, tuple[tuple[str, ...], tuple[str, ...], Callable]] = {
    "heat1d": (("t", "x"), ("alpha", "k"), _heat1d),
    "advection1d": (("t", "x"), ("c", "k"), _advection1d),
    "taylor_green": (("t", "x", "y"), ("nu", "rho"), _taylor_green),
}


@dataclass(frozen=True)
class SynthSpec:
    """ A closed-form solution sampled on a uniform grid """
    kind: str
    params: dict[str, float] = field(default_factory=dict, hash=False)
    shape: tuple[int, ...] = ()
    origins: tuple[float, ...] = ()
    steps: tuple[float, ...] = ()
    noise_std: float = 0.0

    def __post_init__(self):
        if self.kind not in SOLUTIONS:
            raise ConfigurationError(f"unknown synthetic kind '{self.kind}', choose from {sorted(SOLUTIONS)}")
        _, required, _ = SOLUTIONS[self.kind]
        missing = [name for name in required if name not in self.params]
        if missing:
            raise ConfigurationError(f"{self.kind} needs params {missing}")
        if not all(np.isfinite(float(v)) for v in self.params.values()):
            raise ConfigurationError(f"{self.kind} params must be finite, got {self.params}")
        if self.kind == "taylor_green" and not (self.params["rho"] > 0 and self.params["nu"] >= 0):
            raise ConfigurationError("taylor_green needs rho > 0 and nu >= 0")
        if self.kind == "heat1d" and self.params["alpha"] < 0:
            raise ConfigurationError("heat1d needs a non-negative diffusivity alpha")
        if not self.noise_std >= 0:
            raise ConfigurationError(f"noise_std must be non-negative, got {self.noise_std}")
        self.grid

    @property
    def dim_names(self) -> tuple[str, ...]:
        return SOLUTIONS[self.kind][0]

    @property
    def grid(self) -> Grid:
        try:
            return Grid(self.dim_names, self.shape, self.origins, self.steps)
        except ShapeError as exc:
            raise ConfigurationError(f"invalid grid for {self.kind}: {exc}") from exc

    def fields(self, coords: dict, xp) -> dict:
        return SOLUTIONS[self.kind][2](coords, {k: float(v) for k, v in self.params.items()}, xp)


def default_spec(kind: str, noise_std: float = 0.0, **params) -> SynthSpec:
    """
    Desk-scale spec of a synthetic kind; keyword params override the defaults.

    Args:
        kind (str): heat1d, advection1d or taylor_green.
        noise_std (float): Relative Gaussian noise level.

    Returns:
        SynthSpec: Spec on a 2*pi periodic spatial box.
    """
    match kind:
        case "heat1d":
            defaults = {"alpha": 1.0, "k": 2.0, "a2": 0.0, "k2": 3.0}
            n_t, n_x = constants.HEAT_SHAPE
            shape, steps = (n_t, n_x), (constants.TIME_STEP, constants.TWO_PI / n_x)
        case "advection1d":
            defaults = {"c": 1.0, "k": 1.0}
            n_t, n_x = constants.HEAT_SHAPE
            shape, steps = (n_t, n_x), (constants.TIME_STEP, constants.TWO_PI / n_x)
        case "taylor_green":
            defaults = {"nu": 0.1, "rho": 1.0}
            n_t, n_x, n_y = constants.TAYLOR_GREEN_SHAPE
            shape, steps = (n_t, n_x, n_y), (constants.TIME_STEP, constants.TWO_PI / n_x, constants.TWO_PI / n_y)
        case _:
            raise ConfigurationError(f"unknown synthetic kind '{kind}', choose from {sorted(SOLUTIONS)}")
    unknown = set(params) - set(defaults)
    if unknown:
        raise ConfigurationError(f"{kind} has no params {sorted(unknown)}")
    return SynthSpec(kind, {**defaults, **params}, shape, (0.0,) * len(shape), steps, noise_std)


def generate(spec: SynthSpec, rng: np.random.Generator | None = None) -> Dataset:
    """
    Sample the closed-form solution of a spec on its grid.

    Args:
        spec (SynthSpec): What to generate.
        rng (np.random.Generator | None): Noise source; unused when spec.noise_std is 0.

    Returns:
        Dataset: One field per dependent variable, values scaled by (1 + noise_std * N(0, 1)).
    """
    grid = spec.grid
    coords = dict(zip(grid.dim_names, grid.mesh()))
    clean = spec.fields(coords, np)
    if spec.noise_std > 0:
        rng = rng if rng is not None else np.random.default_rng()
    fields = []
    for name, values in clean.items():
        values = np.asarray(values, dtype=np.float64)
        if spec.noise_std > 0:
            values = values * (1.0 + spec.noise_std * rng.standard_normal(values.shape))
        fields.append(DataField(name, grid, values))
    logger.info("generated %s on grid %s with fields %s", spec.kind, grid.shape, [f.name for f in fields])
    return Dataset(grid, tuple(fields))


def analytic_derivatives(spec: SynthSpec, max_order: int = constants.DIFF_MAX_ORDER) -> TokenCache:
    """
    Exact token cache of a spec, differentiating its closed form with torch autograd.

    Every field value depends on its own grid point only, so the gradient of the field's sum
    with respect to one coordinate array is the pointwise partial derivative.

    Args:
        spec (SynthSpec): Closed-form solution; noise is ignored.
        max_order (int): Highest pure derivative order per axis.

    Returns:
        TokenCache: Raw fields and pure derivatives, keyed like the numeric cache.
    """
    if max_order < 1:
        raise ArgumentError(f"max_order must be >= 1, got {max_order}")
    grid = spec.grid
    leaves = {
        name: torch.tensor(grid.coordinates(axis), dtype=torch.float64, requires_grad=True)
        for axis, name in enumerate(grid.dim_names)
    }
    fields = spec.fields(leaves, torch)

    arrays, entries = {}, {}
    for variable, values in fields.items():
        arrays[variable] = values.detach().numpy().copy()
        entries[variable] = TokenEntry(variable, 0, 0)
        for axis, axis_name in enumerate(grid.dim_names):
            current = values
            for order in range(1, max_order + 1):
                grad = None
                if current is not None and current.requires_grad:
                    grad, = torch.autograd.grad(current.sum(), leaves[axis_name], create_graph=True, allow_unused=True)
                current = grad
                key = token_key(variable, axis_name, order)
                arrays[key] = np.zeros(grid.size) if grad is None else grad.detach().numpy().copy()
                entries[key] = TokenEntry(variable, axis, order)
    return TokenCache(grid, arrays, entries)


def ground_truth(spec: SynthSpec) -> list[str]:
    """ The system the spec's solution satisfies, one equation per line """
    p = spec.params
    match spec.kind:
        case "heat1d":
            return [f"d1u/dt1 = {p['alpha']:g} * d2u/dx2"]
        case "advection1d":
            return [f"d1u/dt1 = {-p['c']:g} * d1u/dx1"]
        case "taylor_green":
            nu, inv_rho = p["nu"], 1.0 / p["rho"]
            return [
                f"d1u/dt1 + u * d1u/dx1 + v * d1u/dy1 = {-inv_rho:g} * d1p/dx1 + {nu:g} * (d2u/dx2 + d2u/dy2)",
                f"d1v/dt1 + u * d1v/dx1 + v * d1v/dy1 = {-inv_rho:g} * d1p/dy1 + {nu:g} * (d2v/dx2 + d2v/dy2)",
                "d1u/dx1 + d1v/dy1 = 0",
            ]
    raise ConfigurationError(f"unknown synthetic kind '{spec.kind}'")


def with_static_field(dataset: Dataset, name: str = "p", value: float | np.ndarray = 1.0) -> Dataset:
    """
    Add a field that does not change in time.

    Args:
        dataset (Dataset): Dataset to extend; the first axis is time.
        name (str): New variable name.
        value (float | np.ndarray): Constant, or a profile over the non-time axes repeated at every time.

    Returns:
        Dataset: The dataset with one more field.
    """
    grid = dataset.grid
    profile = np.asarray(value, dtype=np.float64)
    if profile.ndim and profile.shape != grid.shape[1:]:
        raise ArgumentError(f"static profile of shape {profile.shape}, expected {grid.shape[1:]}")
    values = np.broadcast_to(profile, grid.shape)
    return Dataset(grid, dataset.fields + (DataField(name, grid, values),))
