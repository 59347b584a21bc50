import hashlib
import logging
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from pde_forge import constants
from pde_forge.differentiation import DiffConfig, TokenCache, build_token_cache
from pde_forge.equation_ea.equation_ea import EAConfig
from pde_forge.equation_ea.system_builder import (
    EquationSystem, SparsityVector, build_system, default_pool, objective_vector,
)
from pde_forge.equation_ea.token_pool import TokenFamily
from pde_forge.errors import ArgumentError, ConfigurationError
from pde_forge.grid_core import Dataset
from pde_forge.moeadd.moeadd_utils import (
    WeightVector, assign_subregion, crossover_lambda, dominates, generate_weights, mutate_lambda,
    nondominated_sort, pbi, weight_matrix,
)
from pde_forge.utils import render_equation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MOEADDConfig:
    """ Settings of the meta-optimization over sparsity vectors """
    divisions: int = constants.DIVISIONS
    n_neighbors: int = constants.NEIGHBORS
    epochs: int = constants.MOEADD_EPOCHS
    p_mut: float = constants.P_MUT
    p_xover: float = constants.P_XOVER
    sigma_mut: float = constants.SIGMA_MUT
    p_local: float = constants.P_LOCAL
    lambda_bounds: tuple[float, float] = constants.LAMBDA_BOUNDS
    pbi_theta: float = constants.PBI_THETA
    rng_seed: int = 0
    pilot_epochs: int = 5
    ideal_safety: float = constants.IDEAL_SAFETY

    def __post_init__(self):
        for name in ("p_mut", "p_xover", "p_local"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        lo, hi = self.lambda_bounds
        if not 0.0 < lo <= hi:
            raise ConfigurationError(f"lambda bounds must satisfy 0 < lo <= hi, got {self.lambda_bounds}")
        if self.sigma_mut <= 0 or self.pbi_theta <= 0:
            raise ConfigurationError("sigma_mut and pbi_theta must be positive")
        if self.epochs < 0 or self.pilot_epochs < 0 or self.divisions < 1 or self.n_neighbors < 1:
            raise ConfigurationError("epochs must be non-negative, divisions and n_neighbors positive")
        if not 0.0 < self.ideal_safety <= 1.0:
            raise ConfigurationError(f"ideal_safety must lie in (0, 1], got {self.ideal_safety}")


@dataclass(frozen=True, eq=False)
class Individual:
    genotype: SparsityVector
    system: EquationSystem
    objectives: np.ndarray
    level: int = 0
    subregion: int = 0


@dataclass(frozen=True, eq=False)
class ParetoArchive:
    individuals: tuple[Individual, ...]
    ideal_point: np.ndarray

    def __len__(self) -> int:
        return len(self.individuals)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([ind.objectives for ind in self.individuals])


class FrontierRow(NamedTuple):
    total_complexity: int
    total_error: float
    equations: tuple[str, ...]
    lambdas: tuple[float, ...]
    quality: tuple[float, ...]
    complexity: tuple[int, ...]
    dominated: bool = False


def quantize(genotype: SparsityVector, digits: int = constants.LAMBDA_DIGITS) -> tuple[float, ...]:
    return tuple(float(f"{lam:.{digits}g}") for lam in genotype)


class SystemEvaluator:
    """
    Genotype -> equation system, memoized on sparsity constants rounded to a few significant digits.

    Each distinct rounded vector gets its own EA seed, hashed from the vector and the base seed,
    so a result never depends on evaluation order.
    """

    def __init__(self, cache: TokenCache, pool: Sequence[TokenFamily], ea_cfg: EAConfig, diff_cfg: DiffConfig):
        self.cache = cache
        self.pool = list(pool)
        self.ea_cfg = ea_cfg
        self.diff_cfg = diff_cfg
        self.memo: dict[tuple[float, ...], EquationSystem] = {}

    @property
    def n_variables(self) -> int:
        return len(self.cache.variables)

    def seed_for(self, key: tuple[float, ...]) -> int:
        digest = hashlib.sha256(f"{self.ea_cfg.rng_seed}:{key!r}".encode()).digest()
        return int.from_bytes(digest[:8], "little")

    def __call__(self, genotype: SparsityVector, ea_cfg: EAConfig | None = None) -> EquationSystem:
        key = quantize(genotype)
        if ea_cfg is None and key in self.memo:
            return self.memo[key]
        cfg = replace(ea_cfg or self.ea_cfg, rng_seed=self.seed_for(key))
        system = build_system(self.cache, self.pool, SparsityVector(key), cfg, self.diff_cfg).system
        if ea_cfg is None:
            self.memo[key] = system
            logger.debug("evaluated lambdas %s: objectives %s", key, objective_vector(system))
        return system


def _pilot_ideal(evaluator: SystemEvaluator, cfg: MOEADDConfig) -> np.ndarray:
    pilot_cfg = replace(evaluator.ea_cfg, epochs=cfg.pilot_epochs)
    genotype = SparsityVector((cfg.lambda_bounds[0],) * evaluator.n_variables)
    system = evaluator(genotype, pilot_cfg)
    ideal = np.zeros(2 * evaluator.n_variables)
    ideal[0::2] = cfg.ideal_safety * system.quality
    return ideal


def estimate_ideal_point(
        dataset: Dataset,
        cfg: MOEADDConfig = MOEADDConfig(),
        ea_cfg: EAConfig = EAConfig(),
        diff_cfg: DiffConfig = DiffConfig(),
        pool: Sequence[TokenFamily] | None = None
) -> np.ndarray:
    """
    Approximate the best reachable objectives by a short pilot run.

    Args:
        dataset (Dataset): Observed fields.
        cfg (MOEADDConfig): Pilot length, lambda bounds and safety factor.
        ea_cfg (EAConfig): Equation search settings; epochs are replaced by cfg.pilot_epochs.
        diff_cfg (DiffConfig): Differentiation settings.
        pool (Sequence[TokenFamily] | None): Token pool, defaults to every derivative of every variable.

    Returns:
        np.ndarray: (Q1, C1, ..., Qk, Ck) with complexity components 0 and scaled pilot qualities.
    """
    cache = build_token_cache(dataset, diff_cfg)
    pool = pool if pool is not None else default_pool(dataset.grid, dataset.variable_names, diff_cfg.max_order)
    return _pilot_ideal(SystemEvaluator(cache, pool, ea_cfg, diff_cfg), cfg)


class _ExternalArchive:
    """ Every non-dominated individual seen so far, one per objective vector """

    def __init__(self):
        self.members: list[Individual] = []

    def add(self, individual: Individual) -> None:
        point = individual.objectives
        for member in self.members:
            if dominates(member.objectives, point) or np.array_equal(member.objectives, point):
                return
        self.members = [m for m in self.members if not dominates(point, m.objectives)]
        self.members.append(individual)


def _scale(objectives: np.ndarray, ideal: np.ndarray) -> np.ndarray:
    """ nadir - ideal, with degenerate axes left unscaled """
    span = objectives.max(axis=0) - ideal
    return np.where(span > 0, span, 1.0)


def _classify(population: list[Individual], weights: np.ndarray, ideal: np.ndarray) -> list[Individual]:
    objectives = np.array([ind.objectives for ind in population])
    levels = nondominated_sort(objectives)
    scale = _scale(objectives, ideal)
    return [
        replace(ind, level=int(level), subregion=assign_subregion(ind.objectives, weights, ideal, scale))
        for ind, level in zip(population, levels)
    ]


def update_population(
        population: list[Individual],
        child: Individual,
        weights: Sequence[WeightVector],
        ideal: np.ndarray,
        theta: float = constants.PBI_THETA
) -> list[Individual]:
    """
    Insert a child and drop one individual so the population size is conserved.

    The dropped individual belongs to the worst non-domination level; among that level's
    subregions the most crowded one loses its member with the worst PBI value.

    Args:
        population (list[Individual]): Current population.
        child (Individual): Evaluated offspring.
        weights (Sequence[WeightVector]): Subregion directions.
        ideal (np.ndarray): Current ideal point.
        theta (float): PBI penalty.

    Returns:
        list[Individual]: The new population with refreshed levels and subregions.
    """
    matrix = weight_matrix(weights)
    candidates = _classify(population + [child], matrix, ideal)
    objectives = np.array([ind.objectives for ind in candidates])
    scale = _scale(objectives, ideal)

    worst_level = max(ind.level for ind in candidates)
    last = [i for i, ind in enumerate(candidates) if ind.level == worst_level]
    crowding = np.bincount([ind.subregion for ind in candidates], minlength=len(matrix))
    # Ties go to the lowest subregion index, then the lowest individual index
    region = min({candidates[i].subregion for i in last}, key=lambda r: (-crowding[r], r))
    members = [i for i in last if candidates[i].subregion == region]
    victim = min(members, key=lambda i: (-pbi(candidates[i].objectives, matrix[region], ideal, theta, scale), i))
    return [ind for i, ind in enumerate(candidates) if i != victim]


def _select_parents(
        population: list[Individual],
        weight: WeightVector,
        rng: np.random.Generator,
        p_local: float
) -> tuple[Individual, Individual]:
    pool = list(range(len(population)))
    if rng.random() < p_local:
        neighborhood = set(weight.neighbors)
        local = [i for i, ind in enumerate(population) if ind.subregion in neighborhood]
        if len(local) >= 2:
            pool = local
    a, b = rng.choice(pool, size=2, replace=False)
    return population[int(a)], population[int(b)]


def run_moeadd(
        dataset: Dataset | None,
        cfg: MOEADDConfig = MOEADDConfig(),
        ea_cfg: EAConfig = EAConfig(),
        diff_cfg: DiffConfig = DiffConfig(),
        pool: Sequence[TokenFamily] | None = None,
        cache: TokenCache | None = None,
        on_epoch: Callable[[int, ParetoArchive], None] | None = None
) -> ParetoArchive:
    """
    Search the sparsity vectors whose equation systems trade off quality against complexity.

    Args:
        dataset (Dataset | None): Observed fields; may be None when `cache` is given.
        cfg (MOEADDConfig): Meta-optimization settings.
        ea_cfg (EAConfig): Equation search settings.
        diff_cfg (DiffConfig): Differentiation settings.
        pool (Sequence[TokenFamily] | None): Token pool, defaults to every derivative of every variable.
        cache (TokenCache | None): Prebuilt token cache, e.g. analytic derivatives.
        on_epoch (Callable | None): Called with (epoch, archive) after the initial population and every epoch.

    Returns:
        ParetoArchive: Every non-dominated system seen during the run.
    """
    if cache is None:
        if dataset is None:
            raise ArgumentError("either a dataset or a token cache is required")
        cache = build_token_cache(dataset, diff_cfg)
    if pool is None:
        pool = default_pool(cache.grid, cache.variables, diff_cfg.max_order)

    evaluator = SystemEvaluator(cache, pool, ea_cfg, diff_cfg)
    k = evaluator.n_variables
    weights = generate_weights(2 * k, cfg.divisions, cfg.n_neighbors)
    matrix = weight_matrix(weights)
    rng = np.random.default_rng(cfg.rng_seed)
    ideal = _pilot_ideal(evaluator, cfg)
    archive = _ExternalArchive()

    def evaluate(genotype: SparsityVector) -> Individual:
        nonlocal ideal
        system = evaluator(genotype)
        individual = Individual(genotype, system, objective_vector(system))
        ideal = np.minimum(ideal, individual.objectives)
        archive.add(individual)
        return individual

    def snapshot() -> ParetoArchive:
        return ParetoArchive(tuple(archive.members), ideal.copy())

    lo, hi = cfg.lambda_bounds
    population = [
        evaluate(SparsityVector(tuple(np.clip(np.exp(rng.uniform(np.log(lo), np.log(hi), size=k)), lo, hi))))
        for _ in range(len(weights))
    ]
    population = _classify(population, matrix, ideal)
    logger.info("initial population of %d systems, %d on the frontier", len(population), len(archive.members))
    if on_epoch is not None:
        on_epoch(0, snapshot())

    for epoch in range(1, cfg.epochs + 1):
        for weight in weights:
            parent_a, parent_b = _select_parents(population, weight, rng, cfg.p_local)
            for genotype in crossover_lambda(parent_a.genotype, parent_b.genotype, cfg, rng):
                child = evaluate(mutate_lambda(genotype, cfg, rng))
                population = update_population(population, child, weights, ideal, cfg.pbi_theta)
        logger.info("epoch %d/%d: %d systems on the frontier, ideal point %s",
                    epoch, cfg.epochs, len(archive.members), np.array2string(ideal, precision=4))
        if on_epoch is not None:
            on_epoch(epoch, snapshot())

    return snapshot()


def aggregate_frontier(archive: ParetoArchive) -> list[FrontierRow]:
    """
    Total complexity and total error of every archived system.

    Args:
        archive (ParetoArchive): Non-empty archive.

    Returns:
        list[FrontierRow]: Rows sorted by (total complexity, total error); a row is flagged
            dominated when an earlier row is no worse in both totals.
    """
    if len(archive) == 0:
        raise ArgumentError("cannot aggregate an empty archive")
    rows = sorted(
        FrontierRow(
            total_complexity=int(sum(ind.system.complexity)),
            total_error=float(np.sum(ind.system.quality)),
            equations=tuple(render_equation(eq) for eq in ind.system.equations),
            lambdas=ind.system.lambdas.lambdas,
            quality=tuple(float(q) for q in ind.system.quality),
            complexity=ind.system.complexity,
        )
        for ind in archive.individuals
    )
    frontier = []
    best_error = np.inf
    for row in rows:
        frontier.append(row._replace(dominated=row.total_error >= best_error))
        best_error = min(best_error, row.total_error)
    return frontier
