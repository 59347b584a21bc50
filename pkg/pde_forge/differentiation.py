import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import linalg
from scipy.special import factorial

from pde_forge import constants
from pde_forge.errors import ArgumentError, ConfigurationError, MissingTokenError, ShapeError
from pde_forge.grid_core import DataField, Dataset, Grid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiffConfig:
    """ Local polynomial fit used for numerical differentiation """
    window: int = constants.DIFF_WINDOW
    degree: int = constants.DIFF_DEGREE
    max_order: int = constants.DIFF_MAX_ORDER

    def __post_init__(self):
        if self.degree < 2:
            raise ConfigurationError(f"polynomial degree must be >= 2, got {self.degree}")
        if self.window % 2 == 0 or self.window <= self.degree:
            raise ConfigurationError(f"window must be odd and larger than the degree, got window={self.window}, degree={self.degree}")
        if not 1 <= self.max_order <= self.degree:
            raise ConfigurationError(f"max_order must lie in [1, degree], got {self.max_order}")


def token_key(variable: str, axis_name: str, order: int) -> str:
    """ Cache key of a pure derivative; order 0 is the raw variable """
    if order == 0:
        return variable
    return f"d{order}{variable}/d{axis_name}{order}"


class TokenEntry(NamedTuple):
    variable: str
    axis: int
    order: int


class TokenCache:
    """
    Evaluated tokens over a grid, keyed by signature.

    The cache is immutable: arrays are read-only and `replace` returns a new cache.
    """

    def __init__(self, grid: Grid, arrays: dict[str, np.ndarray], entries: dict[str, TokenEntry]):
        self.grid = grid
        self._arrays = {}
        for key, values in arrays.items():
            values = np.array(values, dtype=np.float64).ravel()
            if values.size != grid.size:
                raise ShapeError(f"token '{key}' has {values.size} values, grid needs {grid.size}")
            values.setflags(write=False)
            self._arrays[key] = values
        self._entries = dict(entries)
        missing = set(self._arrays) ^ set(self._entries)
        if missing:
            raise ArgumentError(f"tokens without metadata or data: {sorted(missing)}")
        for variable in self.variables:
            if variable not in self._arrays:
                raise ArgumentError(f"raw field of '{variable}' is missing from the cache")

    def __getitem__(self, key: str) -> np.ndarray:
        try:
            return self._arrays[key]
        except KeyError:
            raise MissingTokenError(key) from None

    def __contains__(self, key: str) -> bool:
        return key in self._arrays

    def __len__(self) -> int:
        return len(self._arrays)

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    @property
    def variables(self) -> tuple[str, ...]:
        """ Dependent variables, in cache insertion order """
        seen = dict.fromkeys(e.variable for e in self._entries.values())
        return tuple(seen)

    def entry(self, key: str) -> TokenEntry:
        try:
            return self._entries[key]
        except KeyError:
            raise MissingTokenError(key) from None

    def items(self):
        return self._arrays.items()

    def replace(self, updates: dict[str, np.ndarray]) -> "TokenCache":
        """ New cache with some token arrays swapped out """
        unknown = set(updates) - set(self._arrays)
        if unknown:
            raise MissingTokenError(sorted(unknown)[0])
        arrays = {key: updates.get(key, values) for key, values in self._arrays.items()}
        return TokenCache(self.grid, arrays, self._entries)

    def to_dataset(self) -> Dataset:
        """ Every cached token as a field, for export """
        return Dataset.from_arrays(self.grid, dict(self._arrays))


@lru_cache(maxsize=64)
def _fit_weights(window: int, degree: int, order: int) -> np.ndarray:
    """
    Weights that turn a window of samples into the order-th derivative of its least-squares polynomial.

    Row `pos` holds the weights for the point at index `pos` inside the window, in index units
    (divide by step**order afterwards).
    """
    weights = np.empty((window, window))
    offsets = np.arange(window, dtype=np.float64)
    scale = window // 2
    for pos in range(window):
        # Centered local coordinate, scaled into [-2, 2]
        xi = (offsets - pos) / scale
        vander = np.vander(xi, degree + 1, increasing=True)
        # Normal equations: (V^T V) c = V^T y, so c = (V^T V)^-1 V^T y
        projector = linalg.solve(vander.T @ vander, vander.T, assume_a="pos")
        weights[pos] = factorial(order, exact=True) * projector[order] / scale ** order
    weights.setflags(write=False)
    return weights


def derivative_array(values: np.ndarray, grid: Grid, axis: int, order: int, cfg: DiffConfig) -> np.ndarray:
    """ Order-th derivative of a flat field along one axis, flat result """
    n = grid.shape[axis]
    if n < cfg.window:
        raise ConfigurationError(f"axis '{grid.dim_names[axis]}' has {n} points, window needs {cfg.window}")
    weights = _fit_weights(cfg.window, cfg.degree, order)
    half = cfg.window // 2

    data = np.moveaxis(np.asarray(values, dtype=np.float64).reshape(grid.shape), axis, -1)
    out = np.empty_like(data)

    # Interior points sit in the middle of their window
    windows = sliding_window_view(data, cfg.window, axis=-1)
    out[..., half:n - half] = windows @ weights[half]

    # Boundary points keep the full window, shifted to stay inside the axis
    head, tail = data[..., :cfg.window], data[..., n - cfg.window:]
    for pos in range(half):
        out[..., pos] = head @ weights[pos]
        out[..., n - half + pos] = tail @ weights[half + 1 + pos]

    out /= grid.steps[axis] ** order
    return np.moveaxis(out, -1, axis).ravel()


def differentiate(field: DataField, axis: int | str, order: int, cfg: DiffConfig = DiffConfig()) -> DataField:
    """
    Differentiate a field by fitting local polynomials along one axis.

    Args:
        field (DataField): Field to differentiate.
        axis (int | str): Axis index or name.
        order (int): Derivative order, 1..cfg.max_order.
        cfg (DiffConfig): Window and polynomial degree.

    Returns:
        DataField: The derivative on the same grid, named by its token signature.
    """
    grid = field.grid
    axis = grid.axis_index(axis)
    if not 1 <= order <= cfg.max_order:
        raise ArgumentError(f"order must lie in [1, {cfg.max_order}], got {order}")
    values = derivative_array(field.values, grid, axis, order, cfg)
    return DataField(token_key(field.name, grid.dim_names[axis], order), grid, values)


def variable_tokens(variable: str, values: np.ndarray, grid: Grid, cfg: DiffConfig) -> tuple[dict, dict]:
    """ Raw field plus every pure derivative of one variable """
    arrays = {variable: np.asarray(values, dtype=np.float64)}
    entries = {variable: TokenEntry(variable, 0, 0)}
    for axis, axis_name in enumerate(grid.dim_names):
        for order in range(1, cfg.max_order + 1):
            key = token_key(variable, axis_name, order)
            arrays[key] = derivative_array(values, grid, axis, order, cfg)
            entries[key] = TokenEntry(variable, axis, order)
    return arrays, entries


def build_token_cache(dataset: Dataset, cfg: DiffConfig = DiffConfig()) -> TokenCache:
    """
    Differentiate every variable of a dataset once and cache the results.

    Args:
        dataset (Dataset): Observed fields.
        cfg (DiffConfig): Differentiation settings.

    Returns:
        TokenCache: Raw fields and pure derivatives up to cfg.max_order along every axis.
    """
    arrays, entries = {}, {}
    for f in dataset.fields:
        var_arrays, var_entries = variable_tokens(f.name, f.values, dataset.grid, cfg)
        arrays.update(var_arrays)
        entries.update(var_entries)
    logger.info("token cache: %d tokens for %d variables", len(arrays), len(dataset.fields))
    return TokenCache(dataset.grid, arrays, entries)
