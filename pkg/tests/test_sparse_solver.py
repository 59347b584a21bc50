import numpy as np
import pytest

from pde_forge.equation_ea.sparse_solver import (
    RegressionProblem, lasso, ols_fit, soft_threshold, standardize, support_from_beta,
)
from pde_forge.errors import ArgumentError, DataError


def orthonormal_problem(rng, n_rows=200, n_cols=10):
    """ Columns that stay orthonormal (in the 1/M inner product) after standardization """
    raw = rng.standard_normal((n_rows, n_cols))
    raw -= raw.mean(axis=0)
    q, _ = np.linalg.qr(raw)
    x = q * np.sqrt(n_rows)
    y = x @ rng.standard_normal(n_cols) + 0.3 * rng.standard_normal(n_rows)
    return x, y


def test_soft_threshold():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-3.0, 1.0) == -2.0
    assert soft_threshold(0.5, 1.0) == 0.0
    with pytest.raises(ArgumentError):
        soft_threshold(1.0, -0.1)


def test_orthonormal_design_has_closed_form(rng):
    for _ in range(100):
        x, y = orthonormal_problem(rng)
        xs, ys, _, _ = standardize(x, y)
        lam = float(rng.uniform(0.01, 0.5))
        expected = [soft_threshold(c, lam) for c in xs.T @ ys / xs.shape[0]]
        result = lasso(RegressionProblem(x, y, lam), tol=1e-12)
        assert result.converged
        np.testing.assert_allclose(result.beta, expected, atol=1e-8)


def test_kkt_on_random_problems(rng):
    tol = 1e-9
    for _ in range(100):
        x = rng.standard_normal((200, 10))
        y = x @ (rng.standard_normal(10) * (rng.random(10) < 0.5)) + 0.2 * rng.standard_normal(200)
        lam = float(rng.uniform(0.001, 0.3))
        result = lasso(RegressionProblem(x, y, lam), tol=tol, max_iter=100_000)
        xs, ys, _, _ = standardize(x, y)
        gradient = xs.T @ (ys - xs @ result.beta) / xs.shape[0]
        slack = 1e3 * tol
        active = result.beta != 0.0
        np.testing.assert_allclose(gradient[active], lam * np.sign(result.beta[active]), atol=slack)
        assert np.all(np.abs(gradient[~active]) <= lam + slack)


@pytest.mark.parametrize("lam", [0.0, 0.01, 0.1, 0.5])
def test_kkt_conditions_hold(rng, lam):
    x = rng.standard_normal((150, 6))
    x[:, 3] = x[:, 0] + 0.1 * rng.standard_normal(150)
    y = x[:, 0] - 2.0 * x[:, 2] + 0.1 * rng.standard_normal(150)
    result = lasso(RegressionProblem(x, y, lam), tol=1e-10, max_iter=100_000)
    xs, ys, _, _ = standardize(x, y)
    gradient = xs.T @ (ys - xs @ result.beta) / xs.shape[0]
    slack = 1e-6
    for g, b in zip(gradient, result.beta):
        if b != 0.0:
            assert g == pytest.approx(lam * np.sign(b), abs=slack)
        else:
            assert abs(g) <= lam + slack


def test_objective_never_increases(rng):
    x = rng.standard_normal((100, 5))
    y = x @ rng.standard_normal(5)
    result = lasso(RegressionProblem(x, y, 0.05), tol=1e-10)
    history = np.array(result.objective_history)
    assert np.all(np.diff(history) <= 1e-12)


def test_large_lambda_zeroes_everything(rng):
    x = rng.standard_normal((80, 3))
    y = x[:, 0]
    result = lasso(RegressionProblem(x, y, 10.0))
    assert not np.any(result.beta)
    assert support_from_beta(result.beta).size == 0


def test_constant_columns_and_target():
    x = np.column_stack([np.ones(20), np.arange(20.0)])
    y = 2.0 * np.arange(20.0)
    result = lasso(RegressionProblem(x, y, 0.01))
    assert result.beta[0] == 0.0
    assert result.beta[1] > 0.0
    flat = lasso(RegressionProblem(x, np.full(20, 4.0), 0.01))
    assert flat.degenerate
    assert not np.any(flat.beta)


def test_small_column_next_to_a_large_one_stays_active(rng):
    small = 1e-3 * rng.standard_normal(100)
    large = 1e10 + 1e9 * rng.standard_normal(100)
    x = np.column_stack([small, large])
    _, _, active, _ = standardize(x, small)
    assert active.tolist() == [True, True]
    result = lasso(RegressionProblem(x, small, 0.01))
    assert result.beta[0] > 0.9


def test_support_shrinks_along_lambda_grid(rng):
    for _ in range(20):
        x, y = orthonormal_problem(rng)
        sizes = [support_from_beta(lasso(RegressionProblem(x, y, lam), tol=1e-12).beta).size
                 for lam in np.geomspace(1e-3, 2.0, 30)]
        assert all(later <= earlier for earlier, later in zip(sizes, sizes[1:]))
        assert sizes[-1] == 0


def test_problem_validation():
    with pytest.raises(ArgumentError):
        RegressionProblem(np.zeros((5, 2)), np.zeros(4), 0.1)
    with pytest.raises(ArgumentError):
        RegressionProblem(np.zeros((5, 2)), np.zeros(5), -1.0)
    with pytest.raises(DataError):
        RegressionProblem(np.full((5, 2), np.nan), np.zeros(5), 0.1)


def test_ols_refit_recovers_raw_coefficients(rng):
    x = rng.standard_normal((60, 3))
    y = 2.0 * x[:, 0] - 0.5 * x[:, 2] + 1.25
    fit = ols_fit(x, y, [2, 0])
    np.testing.assert_allclose(fit.alpha, [2.0, -0.5], atol=1e-10)
    np.testing.assert_allclose(fit.coefficients, [2.0, 0.0, -0.5], atol=1e-10)
    assert fit.intercept == pytest.approx(1.25)
    assert not fit.rank_deficient


def test_ols_residual_is_orthogonal_to_the_support(rng):
    for _ in range(20):
        x = rng.standard_normal((100, 6))
        y = x @ rng.standard_normal(6) + 3.0 + rng.standard_normal(100)
        support = sorted(rng.choice(6, size=int(rng.integers(1, 6)), replace=False).tolist())
        fit = ols_fit(x, y, support)
        residual = y - x @ fit.coefficients - fit.intercept
        np.testing.assert_allclose(x[:, support].T @ residual, 0.0, atol=1e-9)
        assert residual.sum() == pytest.approx(0.0, abs=1e-9)


def test_ols_with_empty_support_is_the_mean():
    fit = ols_fit(np.zeros((4, 2)), [1.0, 2.0, 3.0, 4.0], [])
    assert fit.intercept == 2.5
    assert not np.any(fit.coefficients)


def test_ols_flags_collinear_support(rng):
    a = rng.standard_normal(30)
    x = np.column_stack([a, 2.0 * a])
    fit = ols_fit(x, a, [0, 1])
    assert fit.rank_deficient
    np.testing.assert_allclose(x @ fit.coefficients + fit.intercept, a, atol=1e-10)


def test_ols_support_validation():
    with pytest.raises(ArgumentError):
        ols_fit(np.zeros((4, 2)), np.zeros(4), [2])
    with pytest.raises(ArgumentError):
        ols_fit(np.zeros((2, 2)), np.zeros(2), [0, 1])
