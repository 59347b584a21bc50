import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache, partial
from typing import Callable, Sequence

import numpy as np

from pde_forge import constants
from pde_forge.differentiation import TokenCache
from pde_forge.equation_ea.equation_ea_utils import crossover, mutate, tournament_select
from pde_forge.equation_ea.sparse_solver import RegressionProblem, lasso, ols_fit, support_from_beta
from pde_forge.equation_ea.token_pool import (
    Chromosome, StructureConfig, Term, TokenFamily, evaluate_term, random_chromosome,
)
from pde_forge.errors import ArgumentError, ConfigurationError
from pde_forge.grid_core import field_l2_norm

logger = logging.getLogger(__name__)

# Variable sets already described by earlier equations of the system
DescribedSets = frozenset[frozenset[str]]

TERM_CACHE_SIZE = 256


@dataclass(frozen=True)
class EAConfig:
    """ Settings of the single-equation evolutionary search """
    population_size: int = constants.POPULATION_SIZE
    epochs: int = constants.EPOCHS
    tournament_size: int = constants.TOURNAMENT_SIZE
    p_term_mutation: float = constants.P_TERM_MUTATION
    p_param_mutation: float = constants.P_PARAM_MUTATION
    p_factor_swap: float = constants.P_FACTOR_SWAP
    sigma_param: float = constants.SIGMA_PARAM
    eps_fit: float = constants.EPS_FIT
    rng_seed: int = 0
    structure: StructureConfig = field(default_factory=StructureConfig)
    lasso_tol: float = constants.LASSO_TOL
    lasso_max_iter: int = constants.LASSO_MAX_ITER
    n_workers: int = 1

    def __post_init__(self):
        if min(self.population_size, self.tournament_size, self.n_workers) < 1 or self.epochs < 0:
            raise ConfigurationError("population_size, tournament_size and n_workers must be positive, epochs non-negative")
        if self.tournament_size > self.population_size:
            raise ConfigurationError(f"tournament_size {self.tournament_size} exceeds population_size {self.population_size}")
        for name in ("p_term_mutation", "p_param_mutation", "p_factor_swap"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        if not (self.eps_fit > 0 and self.sigma_param > 0):
            raise ConfigurationError("eps_fit and sigma_param must be positive")


@dataclass(frozen=True, eq=False)
class Equation:
    """
    An evaluated candidate equation: sum(alpha_i * term_i) + intercept = target term.

    `alpha` follows the chromosome's term order with the target term left out.
    """
    chromosome: Chromosome
    right_part_idx: int
    alpha: np.ndarray
    intercept: float
    fitness: float
    residual_norm: float
    lam: float
    penalized: bool = False
    rank_deficient: bool = False

    @property
    def target_term(self) -> Term:
        return self.chromosome.terms[self.right_part_idx]

    @property
    def feature_terms(self) -> tuple[Term, ...]:
        return tuple(t for i, t in enumerate(self.chromosome.terms) if i != self.right_part_idx)

    @property
    def active_terms(self) -> tuple[tuple[float, Term], ...]:
        """ (coefficient, term) pairs of the feature terms that survived sparsification """
        return tuple((float(a), t) for a, t in zip(self.alpha, self.feature_terms) if a != 0.0)

    @property
    def complexity(self) -> int:
        """ Active feature terms plus the target term; the intercept does not count """
        return len(self.active_terms) + 1


def describes_variables(equation: Equation) -> frozenset[str]:
    """
    Dependent variables that the equation actually involves.

    Args:
        equation (Equation): Evaluated equation.

    Returns:
        frozenset[str]: Variables of the target term and of every term with nonzero coefficient.
    """
    variables = set(equation.target_term.variables)
    for _, term in equation.active_terms:
        variables |= term.variables
    return frozenset(variables)


def is_taboo(described: frozenset[str], taboo: DescribedSets) -> bool:
    """ Only equations describing a single, already described variable are penalized """
    return len(described) == 1 and described in taboo


def equation_residual(equation: Equation, cache: TokenCache, evaluate: Callable[[Term], np.ndarray] | None = None) -> np.ndarray:
    """ Residual field L = sum(alpha_i * term_i) + intercept - target over the grid """
    evaluate = evaluate or partial(evaluate_term, cache=cache)
    residual = np.full(cache.grid.size, equation.intercept) - evaluate(equation.target_term)
    for coefficient, term in equation.active_terms:
        residual += coefficient * evaluate(term)
    return residual


def evaluate_equation(
        chromosome: Chromosome,
        lam: float,
        cache: TokenCache,
        taboo: DescribedSets = frozenset(),
        cfg: EAConfig | None = None,
        evaluate: Callable[[Term], np.ndarray] | None = None
) -> Equation:
    """
    Try every term as the right part and keep the split that fits best.

    For each candidate target the other terms are filtered by the LASSO and refitted by OLS
    on the raw data; fitness is 1 / max(||residual||, eps_fit).

    Args:
        chromosome (Chromosome): Equation structure with at least two terms.
        lam (float): LASSO sparsity constant.
        cache (TokenCache): Evaluated tokens.
        taboo (DescribedSets): Variable sets described by earlier equations.
        cfg (EAConfig | None): Solver tolerances and eps_fit.
        evaluate (Callable | None): Term evaluator, e.g. a memoized one.

    Returns:
        Equation: The best split; fitness 0 if it only repeats a described variable.
    """
    cfg = cfg or EAConfig()
    if len(chromosome) < 2:
        raise ArgumentError("a chromosome with fewer than two terms cannot be split into left and right parts")
    evaluate = evaluate or partial(evaluate_term, cache=cache)
    columns = np.column_stack([evaluate(term) for term in chromosome.terms])

    best = None
    for target_idx in range(len(chromosome)):
        features = np.delete(columns, target_idx, axis=1)
        target = columns[:, target_idx]
        beta = lasso(RegressionProblem(features, target, lam), cfg.lasso_tol, cfg.lasso_max_iter).beta
        ols = ols_fit(features, target, support_from_beta(beta))
        residual_norm = field_l2_norm(features @ ols.coefficients + ols.intercept - target)
        fitness = 1.0 / max(residual_norm, cfg.eps_fit)
        # Strict comparison keeps the lowest index on ties
        if best is None or fitness > best.fitness:
            best = Equation(
                chromosome=chromosome,
                right_part_idx=target_idx,
                alpha=ols.coefficients,
                intercept=ols.intercept,
                fitness=fitness,
                residual_norm=residual_norm,
                lam=lam,
                rank_deficient=ols.rank_deficient,
            )

    if is_taboo(describes_variables(best), taboo):
        best = replace(best, fitness=0.0, penalized=True)
    return best


class _Evaluator:
    """ Memoized, optionally threaded evaluation of chromosomes within one run """

    def __init__(self, cache: TokenCache, lam: float, taboo: DescribedSets, cfg: EAConfig):
        self.cache, self.lam, self.taboo, self.cfg = cache, lam, taboo, cfg
        self.term_values = lru_cache(maxsize=TERM_CACHE_SIZE)(partial(evaluate_term, cache=cache))
        self.memo: dict[tuple[str, ...], Equation] = {}

    def _evaluate(self, chromosome: Chromosome) -> Equation:
        return evaluate_equation(chromosome, self.lam, self.cache, self.taboo, self.cfg, self.term_values)

    def __call__(self, chromosomes: Sequence[Chromosome]) -> list[Equation]:
        pending = {}
        for chromosome in chromosomes:
            if chromosome.signature not in self.memo:
                pending.setdefault(chromosome.signature, chromosome)
        if self.cfg.n_workers > 1 and len(pending) > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.n_workers) as pool:
                results = list(pool.map(self._evaluate, pending.values()))
        else:
            results = [self._evaluate(c) for c in pending.values()]
        self.memo.update(zip(pending, results))
        # Equal signatures, distinct objects: re-bind the caller's chromosome
        return [self._rebind(self.memo[c.signature], c) for c in chromosomes]

    @staticmethod
    def _rebind(equation: Equation, chromosome: Chromosome) -> Equation:
        return equation if equation.chromosome is chromosome else replace(equation, chromosome=chromosome)


def run_equation_ea(
        cfg: EAConfig,
        pool: Sequence[TokenFamily],
        lam: float,
        cache: TokenCache,
        taboo: DescribedSets = frozenset()
) -> Equation:
    """
    Evolve a population of candidate equations and return the fittest one seen.

    Args:
        cfg (EAConfig): Search settings, including the seed.
        pool (Sequence[TokenFamily]): Token families available to the search.
        lam (float): LASSO sparsity constant of this equation.
        cache (TokenCache): Evaluated tokens.
        taboo (DescribedSets): Variable sets described by earlier equations.

    Returns:
        Equation: Best equation over the initial population and all epochs.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    evaluate = _Evaluator(cache, lam, taboo, cfg)

    population = evaluate([random_chromosome(rng, pool, cfg.structure) for _ in range(cfg.population_size)])
    best = population[0]
    for candidate in population[1:]:
        if candidate.fitness > best.fitness:
            best = candidate

    n_offspring = max(2, cfg.population_size // 2)
    for epoch in range(1, cfg.epochs + 1):
        # Stable sort: ties keep their insertion order, the best individual always survives
        population.sort(key=lambda e: -e.fitness)
        population = population[:cfg.population_size]
        fitness = [e.fitness for e in population]

        children = []
        while len(children) < n_offspring:
            parent_a = population[tournament_select(fitness, rng, cfg.tournament_size)]
            parent_b = population[tournament_select(fitness, rng, cfg.tournament_size)]
            for child in crossover(parent_a.chromosome, parent_b.chromosome, rng, cfg):
                children.append(mutate(child, rng, cfg, pool))
        offspring = evaluate(children[:n_offspring])

        for candidate in offspring:
            if candidate.fitness > best.fitness:
                best = candidate
        population.extend(offspring)
        logger.debug("epoch %d/%d: best fitness %.6g (%s)", epoch, cfg.epochs, best.fitness, " + ".join(best.chromosome.signature))

    logger.info("equation search (lambda=%g) finished: fitness %.6g, residual %.6g", lam, best.fitness, best.residual_norm)
    return best
