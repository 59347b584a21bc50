import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import comb

from pde_forge import constants
from pde_forge.equation_ea.system_builder import SparsityVector
from pde_forge.errors import ArgumentError, ConfigurationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class WeightVector:
    """ Direction of one subregion of objective space and its K nearest directions """
    weights: np.ndarray
    neighbors: tuple[int, ...]


def generate_weights(n_obj: int, divisions: int, n_neighbors: int = constants.NEIGHBORS) -> list[WeightVector]:
    """
    Simplex-lattice weight vectors: every (h_1, ..., h_m) / H with non-negative integers h_j summing to H.

    Args:
        n_obj (int): Dimension of the objective space, at least 2.
        divisions (int): Lattice parameter H, at least 1.
        n_neighbors (int): Neighborhood size K; each vector counts as its own nearest neighbor.

    Returns:
        list[WeightVector]: C(H + m - 1, m - 1) vectors in lexicographic order of h.
    """
    if n_obj < 2 or divisions < 1 or n_neighbors < 1:
        raise ConfigurationError(f"need n_obj >= 2, divisions >= 1 and K >= 1, got {n_obj}, {divisions}, {n_neighbors}")
    count = comb(divisions + n_obj - 1, n_obj - 1, exact=True)
    if count > constants.MAX_WEIGHTS:
        raise ConfigurationError(f"{count} weight vectors for {n_obj} objectives and H={divisions}; lower the divisions")

    # Stars and bars: positions of the m - 1 bars among H + m - 1 slots
    lattice = []
    for bars in combinations(range(divisions + n_obj - 1), n_obj - 1):
        edges = (-1, *bars, divisions + n_obj - 1)
        lattice.append([edges[j + 1] - edges[j] - 1 for j in range(n_obj)])
    weights = np.array(lattice, dtype=np.float64) / divisions

    k = min(n_neighbors, count)
    neighbors = np.argsort(cdist(weights, weights), axis=1, kind="stable")[:, :k]
    logger.debug("generated %d weight vectors in %d dimensions, K=%d", count, n_obj, k)
    return [WeightVector(w, tuple(int(j) for j in nb)) for w, nb in zip(weights, neighbors)]


def weight_matrix(weights: Sequence[WeightVector] | np.ndarray) -> np.ndarray:
    if isinstance(weights, np.ndarray):
        return weights
    return np.array([w.weights for w in weights])


def dominates(a, b) -> bool:
    """ a dominates b under minimization: no worse everywhere and better somewhere """
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def nondominated_sort(points) -> np.ndarray:
    """
    Non-domination level of every point, minimizing all objectives.

    Args:
        points: n x d array-like of objective vectors.

    Returns:
        np.ndarray: Integer level per point; level 0 is the non-dominated front.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ArgumentError(f"expected an n x d array of objective vectors, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise ArgumentError("objective vectors must be finite")
    n = points.shape[0]

    # dominated_by[i, j]: point j dominates point i
    no_worse = np.all(points[None, :, :] <= points[:, None, :], axis=2)
    better = np.any(points[None, :, :] < points[:, None, :], axis=2)
    dominated_by = no_worse & better

    levels = np.full(n, -1, dtype=int)
    remaining = np.ones(n, dtype=bool)
    level = 0
    while remaining.any():
        front = remaining & ~np.any(dominated_by[:, remaining], axis=1)
        levels[front] = level
        remaining &= ~front
        level += 1
    return levels


def _translate(objectives, ideal, scale) -> np.ndarray:
    translated = np.maximum(np.asarray(objectives, dtype=np.float64) - np.asarray(ideal, dtype=np.float64), 0.0)
    if scale is not None:
        translated = translated / np.asarray(scale, dtype=np.float64)
    return translated


def assign_subregion(objectives, weights: Sequence[WeightVector] | np.ndarray, ideal, scale=None) -> int:
    """
    Index of the weight vector at the smallest angle to the translated objectives.

    Args:
        objectives: Objective vector.
        weights (Sequence[WeightVector] | np.ndarray): Weight vectors or their matrix.
        ideal: Ideal point; translated values below it are clamped at 0.
        scale: Optional positive per-objective normalization applied after translation.

    Returns:
        int: Weight index; the zero vector maps to 0, ties to the lowest index.
    """
    translated = _translate(objectives, ideal, scale)
    norm = np.linalg.norm(translated)
    if norm == 0.0:
        return 0
    matrix = weight_matrix(weights)
    cosine = matrix @ translated / (np.linalg.norm(matrix, axis=1) * norm)
    return int(np.argmax(cosine))


def pbi(objectives, weight, ideal, theta: float = constants.PBI_THETA, scale=None) -> float:
    """ Penalty-based boundary intersection d1 + theta * d2 """
    translated = _translate(objectives, ideal, scale)
    direction = np.asarray(weight.weights if isinstance(weight, WeightVector) else weight, dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    d1 = float(translated @ direction)
    d2 = float(np.linalg.norm(translated - d1 * direction))
    return d1 + theta * d2


def mutate_lambda(genotype: SparsityVector, cfg, rng: np.random.Generator) -> SparsityVector:
    """ Per gene with probability cfg.p_mut: add N(0, sigma_mut * range) and clamp to the bounds """
    lo, hi = cfg.lambda_bounds
    sigma = cfg.sigma_mut * (hi - lo)
    genes = []
    for lam in genotype:
        if rng.random() < cfg.p_mut:
            lam = min(max(lam + rng.normal(0.0, sigma), lo), hi)
        genes.append(lam)
    return SparsityVector(tuple(genes))


def crossover_lambda(a: SparsityVector, b: SparsityVector, cfg, rng: np.random.Generator) -> tuple[SparsityVector, SparsityVector]:
    """ Per gene with probability cfg.p_xover: both children get complementary convex combinations of the parents """
    if len(a) != len(b):
        raise ArgumentError(f"parents of lengths {len(a)} and {len(b)}")
    lo, hi = cfg.lambda_bounds
    child_a, child_b = [], []
    for gene_a, gene_b in zip(a, b):
        if rng.random() < cfg.p_xover:
            alpha = rng.random()
            gene_a, gene_b = alpha * gene_a + (1.0 - alpha) * gene_b, alpha * gene_b + (1.0 - alpha) * gene_a
        child_a.append(min(max(gene_a, lo), hi))
        child_b.append(min(max(gene_b, lo), hi))
    return SparsityVector(tuple(child_a)), SparsityVector(tuple(child_b))
