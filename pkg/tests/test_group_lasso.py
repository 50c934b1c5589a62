"""Sliding-window group lasso: oracle agreement, KKT, and solver behavior."""

import math

import numpy as np
import pytest

from dynsparse import (
    ConvergenceError,
    DomainError,
    ModelConfig,
    NumericalError,
    RegressionData,
    WindowCorrelation,
    WindowProblem,
    mahalanobis_penalty,
    run_sliding_window,
    solve_window,
)


def stacked_whitened(problem):
    """Independent construction of Y and the whitened group designs A_j."""
    Y = np.concatenate(problem.ys)
    L = np.linalg.cholesky(problem.corr.matrix)
    ns = [y.shape[0] for y in problem.ys]
    offsets = np.concatenate([[0], np.cumsum(ns)])
    designs = []
    for j in range(problem.p):
        raw = np.zeros((offsets[-1], problem.width))
        for s, X in enumerate(problem.Xs):
            raw[offsets[s] : offsets[s + 1], s] = X[:, j]
        designs.append(raw @ L)
    return Y, designs


def objective(problem, beta):
    """Direct (unwhitened) objective value."""
    fit = 0.0
    for s, (y, X) in enumerate(zip(problem.ys, problem.Xs)):
        r = y - X @ beta[:, s]
        fit += 0.5 * np.dot(r, r) / problem.sigma2
    return fit + mahalanobis_penalty(beta, problem.corr, problem.gamma)


def fista_oracle(problem, n_iter=200_000):
    """Accelerated proximal-gradient solve of the whitened problem."""
    Y, designs = stacked_whitened(problem)
    p, w = problem.p, problem.width
    A = np.hstack(designs)
    lip = np.linalg.norm(A, 2) ** 2 / problem.sigma2
    step = 1.0 / lip
    theta = np.zeros(p * w)
    z = theta.copy()
    t_acc = 1.0
    for _ in range(n_iter):
        grad = -(A.T @ (Y - A @ z)) / problem.sigma2
        u = (z - step * grad).reshape(p, w)
        norms = np.linalg.norm(u, axis=1, keepdims=True)
        shrink = np.maximum(1.0 - step * problem.gamma / np.maximum(norms, 1e-300), 0.0)
        new = (u * shrink).ravel()
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_acc**2))
        z = new + (t_acc - 1.0) / t_next * (new - theta)
        theta, t_acc = new, t_next
    fit = 0.5 * np.dot(Y - A @ theta, Y - A @ theta) / problem.sigma2
    pen = problem.gamma * np.sum(np.linalg.norm(theta.reshape(p, w), axis=1))
    return theta.reshape(p, w), fit + pen


def random_problem(seed, p=3, d=2, n=5, gamma=1.0, alpha=0.5):
    rng = np.random.default_rng(seed)
    w = d + 1
    Xs = [rng.standard_normal((n, p)) for _ in range(w)]
    ys = [rng.standard_normal(n) * 2.0 for _ in range(w)]
    return WindowProblem(ys=ys, Xs=Xs, gamma=gamma, sigma2=1.0, corr=WindowCorrelation(w, alpha))


# ---------------------------------------------------------------------------
# solve_window
# ---------------------------------------------------------------------------


def test_scalar_soft_threshold():
    # p=1, d=0, X=1, sigma2=1, y=3, gamma=1 -> beta = max(|y| - gamma, 0) = 2
    problem = WindowProblem(
        ys=[np.array([3.0])],
        Xs=[np.array([[1.0]])],
        gamma=1.0,
        sigma2=1.0,
        corr=WindowCorrelation(1, 0.0),
    )
    beta, _ = solve_window(problem)
    assert beta[0, 0] == pytest.approx(2.0, abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_null_solution_threshold(seed):
    problem = random_problem(seed)
    Y, designs = stacked_whitened(problem)
    crit = max(np.linalg.norm(A.T @ Y) for A in designs) / problem.sigma2
    at = WindowProblem(
        ys=problem.ys, Xs=problem.Xs, gamma=crit * 1.0001, sigma2=problem.sigma2, corr=problem.corr
    )
    below = WindowProblem(
        ys=problem.ys, Xs=problem.Xs, gamma=crit * 0.99, sigma2=problem.sigma2, corr=problem.corr
    )
    assert np.all(solve_window(at)[0] == 0.0)
    assert np.any(solve_window(below)[0] != 0.0)


@pytest.mark.parametrize("seed", range(8))
def test_objective_matches_prox_gradient_oracle(seed):
    problem = random_problem(seed)
    beta, _ = solve_window(problem, tol=1e-10)
    _, obj_oracle = fista_oracle(problem)
    assert objective(problem, beta) == pytest.approx(obj_oracle, abs=1e-5)


@pytest.mark.parametrize("seed", range(8))
def test_kkt_residual_via_direct_subgradient(seed):
    # recompute the whitened KKT conditions from scratch at the solution
    problem = random_problem(seed, gamma=0.8)
    beta, _ = solve_window(problem, tol=1e-9)
    Y, designs = stacked_whitened(problem)
    L = np.linalg.cholesky(problem.corr.matrix)
    theta = beta @ np.linalg.inv(L).T
    resid = Y - sum(A @ theta[j] for j, A in enumerate(designs))
    for j, A in enumerate(designs):
        g = -(A.T @ resid) / problem.sigma2
        nrm = np.linalg.norm(theta[j])
        if nrm == 0.0:
            assert np.linalg.norm(g) <= problem.gamma + 1e-8
        else:
            assert np.linalg.norm(g + problem.gamma * theta[j] / nrm) < 1e-8


def test_objective_trace_nonincreasing():
    for seed in range(10):
        problem = random_problem(seed, p=5, d=3, gamma=0.5)
        _, trace = solve_window(problem)
        assert np.all(np.diff(trace) <= 1e-10)


def test_penalty_whitening_identity():
    # direct Mahalanobis penalty equals the Euclidean norm of the
    # whitened coordinates
    rng = np.random.default_rng(5)
    corr = WindowCorrelation(4, 0.7)
    beta = rng.standard_normal((3, 4))
    L = np.linalg.cholesky(corr.matrix)
    theta = beta @ np.linalg.inv(L).T
    direct = mahalanobis_penalty(beta, corr, 1.3)
    assert direct == pytest.approx(1.3 * np.sum(np.linalg.norm(theta, axis=1)), rel=1e-12)


def test_solution_invariant_to_group_order():
    problem = random_problem(11, p=4)
    beta, _ = solve_window(problem, tol=1e-10)
    perm = [2, 0, 3, 1]
    permuted = WindowProblem(
        ys=problem.ys,
        Xs=[X[:, perm] for X in problem.Xs],
        gamma=problem.gamma,
        sigma2=problem.sigma2,
        corr=problem.corr,
    )
    beta_perm, _ = solve_window(permuted, tol=1e-10)
    assert np.allclose(beta_perm, beta[perm], atol=1e-9)


def test_nonconvergence_reports_residual():
    problem = random_problem(0)
    with pytest.raises(ConvergenceError, match="residual"):
        solve_window(problem, tol=1e-14, max_iter=1)


def test_window_shape_validation():
    with pytest.raises(DomainError, match="dim"):
        WindowProblem(
            ys=[np.array([1.0])],
            Xs=[np.array([[1.0]])],
            gamma=1.0,
            sigma2=1.0,
            corr=WindowCorrelation(2, 0.0),
        )


# ---------------------------------------------------------------------------
# run_sliding_window
# ---------------------------------------------------------------------------


def _synthetic_instance(T=80, seed=3, noise=0.5):
    rng = np.random.default_rng(seed)
    truth = np.zeros(T)
    truth[10:30] = 4.0
    truth[45:60] = -3.0
    ys = [np.array([truth[t] + noise * rng.standard_normal()]) for t in range(T)]
    Xs = [np.eye(1)] * T
    return RegressionData(ys, Xs), truth


def test_d0_reduces_to_per_t_lasso():
    data, _ = _synthetic_instance(T=20, seed=9)
    config = ModelConfig(nu=1.0, delta=0.0, gamma=2.0, alpha=0.0, sigma=0.5, p=1, d=0)
    fit = run_sliding_window(data, config)
    # scalar lasso: sign(y) * max(|y|/sigma2 - gamma, 0) * sigma2
    for t in range(20):
        y = data.ys[t][0]
        expected = np.sign(y) * max(abs(y) - config.gamma * config.sigma**2, 0.0)
        assert fit.beta_hat[0, t] == pytest.approx(expected, abs=1e-9)


def test_exact_zeros_on_synthetic_signal():
    data, truth = _synthetic_instance(seed=3)
    config = ModelConfig(nu=2.0, delta=0.0, gamma=5.0, alpha=0.5, sigma=0.5, p=1, d=2)
    fit = run_sliding_window(data, config)
    zero_frac = np.mean(fit.beta_hat[0, truth == 0] == 0.0)
    assert zero_frac > 0.5
    est = fit.support[0]
    true_sup = truth != 0
    tp = np.sum(est & true_sup)
    f1 = 2 * tp / (2 * tp + np.sum(est & ~true_sup) + np.sum(~est & true_sup))
    assert f1 > 0.8


def test_zero_count_weakly_increasing_in_gamma():
    data, _ = _synthetic_instance(seed=13)
    counts = []
    for gamma in [0.1, 0.5, 1.0, 5.0]:
        config = ModelConfig(nu=2.0, delta=0.0, gamma=gamma, alpha=0.5, sigma=0.5, p=1, d=2)
        fit = run_sliding_window(data, config)
        counts.append(int(np.sum(fit.beta_hat == 0.0)))
    assert counts == sorted(counts)


def test_sliding_window_error_reports_time_step():
    data, _ = _synthetic_instance(T=10, seed=1)
    data.ys[4] = np.array([math.nan])
    config = ModelConfig(nu=1.0, delta=0.0, gamma=1.0, alpha=0.0, sigma=0.5, p=1, d=0)
    with pytest.raises((NumericalError, ConvergenceError), match="t=5"):
        run_sliding_window(data, config)


def test_requires_fixed_d_and_enough_data():
    data, _ = _synthetic_instance(T=5, seed=1)
    with pytest.raises(DomainError, match="fixed-d"):
        run_sliding_window(
            data, ModelConfig(nu=1.0, delta=0.1, gamma=1.0, alpha=0.0, sigma=0.5, p=1, rho=0.5)
        )
    with pytest.raises(DomainError, match="T"):
        run_sliding_window(
            data, ModelConfig(nu=4.0, delta=0.0, gamma=1.0, alpha=0.0, sigma=0.5, p=1, d=6)
        )
