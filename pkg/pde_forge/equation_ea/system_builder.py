import logging
from dataclasses import dataclass, replace
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from pde_forge import constants
from pde_forge.differentiation import DiffConfig, TokenCache, build_token_cache, derivative_array
from pde_forge.equation_ea.equation_ea import (
    EAConfig, Equation, describes_variables, equation_residual, run_equation_ea,
)
from pde_forge.equation_ea.token_pool import TokenFamily, derivative_family
from pde_forge.errors import ArgumentError
from pde_forge.grid_core import Dataset, Grid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SparsityVector:
    """ One LASSO constant per equation of the system """
    lambdas: tuple[float, ...]

    def __post_init__(self):
        lambdas = tuple(float(lam) for lam in self.lambdas)
        if not lambdas:
            raise ArgumentError("a sparsity vector needs at least one constant")
        if not all(np.isfinite(lam) and lam > 0 for lam in lambdas):
            raise ArgumentError(f"sparsity constants must be positive and finite, got {lambdas}")
        object.__setattr__(self, "lambdas", lambdas)

    def __len__(self) -> int:
        return len(self.lambdas)

    def __iter__(self):
        return iter(self.lambdas)

    def as_array(self) -> np.ndarray:
        return np.array(self.lambdas)

    def within(self, bounds: tuple[float, float]) -> bool:
        return all(bounds[0] <= lam <= bounds[1] for lam in self.lambdas)


@dataclass(frozen=True, eq=False)
class EquationSystem:
    """ One discovered equation per dependent variable slot, with its objectives """
    equations: tuple[Equation, ...]
    lambdas: SparsityVector
    quality: np.ndarray
    complexity: tuple[int, ...]
    described: tuple[frozenset[str], ...]
    degenerate: bool = False

    @classmethod
    def from_equations(cls, equations: Sequence[Equation], lambdas: SparsityVector) -> "EquationSystem":
        equations = tuple(equations)
        quality = np.array([eq.residual_norm for eq in equations])
        quality.setflags(write=False)
        return cls(
            equations=equations,
            lambdas=lambdas,
            quality=quality,
            complexity=tuple(eq.complexity for eq in equations),
            described=tuple(describes_variables(eq) for eq in equations),
            degenerate=any(eq.penalized for eq in equations),
        )

    def __len__(self) -> int:
        return len(self.equations)


class SystemResult(NamedTuple):
    system: EquationSystem
    working_cache: TokenCache
    residuals: tuple[np.ndarray, ...]


def default_pool(
        grid: Grid,
        variables: Sequence[str],
        max_order: int = constants.DIFF_MAX_ORDER,
        max_power: int = constants.MAX_POWER,
        orders: Mapping[str, int] | None = None
) -> list[TokenFamily]:
    """
    One derivative family per dependent variable.

    Args:
        grid (Grid): Grid of the data.
        variables (Sequence[str]): Dependent variables.
        max_order (int): Highest derivative order.
        max_power (int): Highest factor power.
        orders (Mapping[str, int] | None): Per-axis order limits by axis name; axes not listed
            are excluded. None allows max_order along every axis.

    Returns:
        list[TokenFamily]: The token pool.
    """
    limits = None
    if orders is not None:
        unknown = set(orders) - set(grid.dim_names)
        if unknown:
            raise ArgumentError(f"order limits for unknown axes {sorted(unknown)}")
        limits = [orders.get(name, 0) for name in grid.dim_names]
    return [derivative_family(v, grid.dim_names, max_order, max_power, limits) for v in variables]


def apply_variable_change(
        cache: TokenCache,
        equation: Equation,
        diff_cfg: DiffConfig = DiffConfig(),
        residual: np.ndarray | None = None
) -> TokenCache:
    """
    Subtract an equation's residual field from every token of the cache.

    Raw fields lose L and each derivative token loses the same derivative of L, which
    equals recomputing the derivatives of the shifted raw fields.

    Args:
        cache (TokenCache): Current working cache; left untouched.
        equation (Equation): Equation evaluated on this cache.
        diff_cfg (DiffConfig): Differentiation settings for the derivatives of L.
        residual (np.ndarray | None): Precomputed residual field of the equation.

    Returns:
        TokenCache: The shifted cache.
    """
    if residual is None:
        residual = equation_residual(equation, cache)
    residual = np.asarray(residual, dtype=np.float64).ravel()
    if residual.size != cache.grid.size:
        raise ArgumentError(f"residual has {residual.size} values, cache grid has {cache.grid.size}")

    shifts: dict[tuple[int, int], np.ndarray] = {}
    updates = {}
    for key, values in cache.items():
        entry = cache.entry(key)
        if entry.order == 0:
            updates[key] = values - residual
            continue
        where = (entry.axis, entry.order)
        if where not in shifts:
            shifts[where] = derivative_array(residual, cache.grid, entry.axis, entry.order, diff_cfg)
        updates[key] = values - shifts[where]
    return cache.replace(updates)


def slot_seed(seed: int, slot: int) -> int:
    return int(np.random.SeedSequence([seed, slot]).generate_state(1)[0])


def build_system(
        cache: TokenCache,
        pool: Sequence[TokenFamily],
        lambdas: SparsityVector,
        cfg: EAConfig = EAConfig(),
        diff_cfg: DiffConfig = DiffConfig()
) -> SystemResult:
    """
    Discover equations slot by slot on an already built token cache.

    Args:
        cache (TokenCache): Tokens of the observed data.
        pool (Sequence[TokenFamily]): Token families for the search.
        lambdas (SparsityVector): One sparsity constant per dependent variable.
        cfg (EAConfig): Equation search settings; per-slot seeds derive from cfg.rng_seed.
        diff_cfg (DiffConfig): Differentiation settings used by the variable change.

    Returns:
        SystemResult: The system, the final working cache and the residual field of every slot.
    """
    n_vars = len(cache.variables)
    if len(lambdas) != n_vars:
        raise ArgumentError(f"{len(lambdas)} sparsity constants given for {n_vars} dependent variables")

    working = cache
    taboo: set[frozenset[str]] = set()
    equations, residuals = [], []
    for slot, lam in enumerate(lambdas):
        slot_cfg = replace(cfg, rng_seed=slot_seed(cfg.rng_seed, slot))
        equation = run_equation_ea(slot_cfg, pool, lam, working, frozenset(taboo))
        residual = equation_residual(equation, working)
        residual.setflags(write=False)
        equations.append(equation)
        residuals.append(residual)

        described = describes_variables(equation)
        if len(described) == 1:
            taboo.add(described)
        logger.debug("slot %d: %s describes %s", slot, " + ".join(equation.chromosome.signature), sorted(described))
        working = apply_variable_change(working, equation, diff_cfg, residual)

    system = EquationSystem.from_equations(equations, lambdas)
    if system.degenerate:
        logger.warning("system for lambdas %s holds penalized equations only repeating described variables", system.lambdas.lambdas)
    return SystemResult(system, working, tuple(residuals))


def discover_system(
        dataset: Dataset,
        lambdas: SparsityVector,
        cfg: EAConfig = EAConfig(),
        diff_cfg: DiffConfig = DiffConfig(),
        pool: Sequence[TokenFamily] | None = None
) -> EquationSystem:
    """ Build the token cache of a dataset and discover one equation per dependent variable """
    cache = build_token_cache(dataset, diff_cfg)
    if pool is None:
        pool = default_pool(dataset.grid, dataset.variable_names, diff_cfg.max_order)
    return build_system(cache, pool, lambdas, cfg, diff_cfg).system


def objective_vector(system: EquationSystem) -> np.ndarray:
    """ (Q1, C1, ..., Qk, Ck) in equation order """
    return np.column_stack([system.quality, np.array(system.complexity, dtype=np.float64)]).ravel()
