import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from pde_forge import constants
from pde_forge.errors import ArgumentError, DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RegressionProblem:
    """ LASSO problem: approximate the target term by the other terms """
    features: np.ndarray
    target: np.ndarray
    lam: float

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim == 1:
            features = features[:, None]
        target = np.asarray(self.target, dtype=np.float64).ravel()
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "target", target)

        if features.ndim != 2 or features.shape[1] < 1:
            raise ArgumentError("features must be an M x p matrix with p >= 1")
        if features.shape[0] != target.size:
            raise ArgumentError(f"features have {features.shape[0]} rows, target has {target.size}")
        if not (np.all(np.isfinite(features)) and np.all(np.isfinite(target))):
            raise DataError("regression inputs contain non-finite values")
        if not self.lam >= 0:
            raise ArgumentError(f"lambda must be non-negative, got {self.lam}")
        if features.shape[0] <= features.shape[1]:
            logger.warning("regression with %d rows and %d columns is underdetermined", *features.shape)


@dataclass(frozen=True, eq=False)
class LassoResult:
    beta: np.ndarray
    n_iter: int
    converged: bool
    degenerate: bool = False
    objective_history: list[float] = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class OLSResult:
    alpha: np.ndarray         # Coefficients of the support columns, in support order
    coefficients: np.ndarray  # Full-length coefficients, zero off the support
    intercept: float
    rank_deficient: bool = False


def soft_threshold(z: float, gamma: float) -> float:
    """ sign(z) * max(|z| - gamma, 0) """
    if gamma < 0:
        raise ArgumentError(f"threshold must be non-negative, got {gamma}")
    return float(np.sign(z) * max(abs(z) - gamma, 0.0))


def standardize(features: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """
    Center columns and target and scale them to unit standard deviation.

    A column counts as constant when its standard deviation is below ZERO_VARIANCE times
    its own largest magnitude (at least one).

    Returns:
        tuple: (X, y, active column mask, target is constant).
    """
    x = features - features.mean(axis=0)
    y = target - target.mean()
    x_std = x.std(axis=0)
    y_std = y.std()
    active = x_std > constants.ZERO_VARIANCE * np.maximum(np.abs(features).max(axis=0, initial=0.0), 1.0)
    x = np.where(active, x / np.where(active, x_std, 1.0), 0.0)
    constant_target = not y_std > constants.ZERO_VARIANCE * max(np.abs(target).max(initial=0.0), 1.0)
    y = np.zeros_like(y) if constant_target else y / y_std
    return x, y, active, constant_target


def lasso_objective(gram: np.ndarray, corr: np.ndarray, y_sq: float, beta: np.ndarray, lam: float) -> float:
    """ (1/2M)||y - X beta||^2 + lam ||beta||_1 written with G = X^T X / M and c = X^T y / M """
    return 0.5 * y_sq - beta @ corr + 0.5 * beta @ gram @ beta + lam * np.abs(beta).sum()


def lasso(
        problem: RegressionProblem,
        tol: float = constants.LASSO_TOL,
        max_iter: int = constants.LASSO_MAX_ITER
) -> LassoResult:
    """
    Cyclic coordinate descent for the LASSO on standardized data.

    Minimizes (1/2M)||X beta - y||^2 + lam ||beta||_1 where X and y are the centered,
    unit-variance features and target. Constant columns get beta = 0.

    Args:
        problem (RegressionProblem): Features, target and sparsity constant.
        tol (float): Stop when the largest coordinate update falls below tol.
        max_iter (int): Maximum number of sweeps.

    Returns:
        LassoResult: Coefficients in the standardized space plus convergence flags.
    """
    if tol <= 0:
        raise ArgumentError(f"tol must be positive, got {tol}")
    n_rows, n_cols = problem.features.shape
    x, y, active, constant_target = standardize(problem.features, problem.target)
    beta = np.zeros(n_cols)
    if constant_target:
        return LassoResult(beta=beta, n_iter=0, converged=True, degenerate=True)

    # Gram form, one sweep is O(p^2)
    gram = x.T @ x / n_rows
    corr = x.T @ y / n_rows
    y_sq = float(y @ y) / n_rows
    lam = problem.lam
    history = [lasso_objective(gram, corr, y_sq, beta, lam)]

    converged = False
    n_iter = 0
    columns = np.flatnonzero(active)
    for n_iter in range(1, max_iter + 1):
        max_update = 0.0
        for j in columns:
            rho = corr[j] - gram[j] @ beta + gram[j, j] * beta[j]
            new = soft_threshold(rho, lam) / gram[j, j]
            max_update = max(max_update, abs(new - beta[j]))
            beta[j] = new
        history.append(lasso_objective(gram, corr, y_sq, beta, lam))
        if max_update < tol:
            converged = True
            break

    if not converged:
        logger.warning("lasso stopped after %d sweeps without converging (tol=%g)", max_iter, tol)
    return LassoResult(beta=beta, n_iter=n_iter, converged=converged, objective_history=history)


def support_from_beta(beta: np.ndarray, threshold: float = constants.SUPPORT_THRESHOLD) -> np.ndarray:
    """ Indices of the coefficients that survived the LASSO """
    return np.flatnonzero(np.abs(beta) > threshold)


def ols_fit(features: np.ndarray, target: np.ndarray, support) -> OLSResult:
    """
    Least squares with intercept on the raw columns listed in `support`.

    Args:
        features (np.ndarray): M x p raw feature matrix.
        target (np.ndarray): Raw target of length M.
        support: Column indices to fit; the others get coefficient 0.

    Returns:
        OLSResult: Support coefficients, full coefficient vector, intercept and a rank flag.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, None]
    target = np.asarray(target, dtype=np.float64).ravel()
    support = np.asarray(sorted(int(s) for s in support), dtype=int)
    n_rows, n_cols = features.shape
    if support.size and (support[0] < 0 or support[-1] >= n_cols):
        raise ArgumentError(f"support {support.tolist()} outside {n_cols} columns")
    if support.size >= n_rows:
        raise ArgumentError(f"support of size {support.size} needs more than {n_rows} rows")

    coefficients = np.zeros(n_cols)
    if support.size == 0:
        return OLSResult(alpha=np.zeros(0), coefficients=coefficients, intercept=float(target.mean()))

    design = np.column_stack([features[:, support], np.ones(n_rows)])
    solution, _, rank, _ = linalg.lstsq(design, target, lapack_driver="gelsd")
    rank_deficient = rank < design.shape[1]
    if rank_deficient:
        logger.debug("rank-deficient OLS (rank %d of %d), minimum-norm solution used", rank, design.shape[1])
    alpha = solution[:-1]
    coefficients[support] = alpha
    return OLSResult(alpha=alpha, coefficients=coefficients, intercept=float(solution[-1]), rank_deficient=rank_deficient)
