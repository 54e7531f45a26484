import numpy as np
import pytest

from zilda.direction import (LambdaPath, SparseDirection, kkt_residual,
                             lambda_grid, lambda_path, solve_direction)
from zilda.errors import ConvergenceError, DomainError

from oracles import prox_solver, quadratic_objective


def _random_problem(rng, p):
    a = rng.normal(size=(p, 2 * p))
    gram = a @ a.T / (2 * p)
    d = np.sqrt(np.diag(gram))
    gram = gram / np.outer(d, d)
    np.fill_diagonal(gram, 1.0)
    linear = rng.normal(size=p) * 0.5
    return gram, linear


def test_zero_solution_at_lambda_max():
    rng = np.random.default_rng(0)
    gram, linear = _random_problem(rng, 6)
    lam = np.max(np.abs(linear))
    sol = solve_direction(gram, linear, lam)
    assert np.all(sol.beta == 0.0)
    assert sol.support.size == 0
    sol2 = solve_direction(gram, linear, lam * 1.5)
    assert np.all(sol2.beta == 0.0)


def test_unpenalized_matches_direct_solve():
    rng = np.random.default_rng(1)
    gram, linear = _random_problem(rng, 5)
    sol = solve_direction(gram, linear, 0.0)
    direct = np.linalg.solve(gram, linear)
    assert np.max(np.abs(sol.beta - direct)) <= 1e-6


def test_kkt_residual_certified():
    rng = np.random.default_rng(2)
    for _ in range(10):
        gram, linear = _random_problem(rng, 12)
        lam = 0.15 * np.max(np.abs(linear))
        sol = solve_direction(gram, linear, lam)
        assert sol.kkt_residual <= 1e-6
        assert kkt_residual(gram, linear, lam, sol.beta) <= 1e-6
        assert np.array_equal(sol.support, np.flatnonzero(sol.beta))


def test_objective_matches_prox_oracle():
    rng = np.random.default_rng(3)
    for _ in range(8):
        gram, linear = _random_problem(rng, 8)
        lam = 0.1
        sol = solve_direction(gram, linear, lam)
        _, obj_oracle = prox_solver(gram, linear, lam)
        assert sol.objective <= obj_oracle + 1e-6
        assert abs(sol.objective - obj_oracle) <= 1e-6


def test_objective_nonincreasing_per_sweep():
    rng = np.random.default_rng(4)
    gram, linear = _random_problem(rng, 15)
    sol = solve_direction(gram, linear, 0.05, track_objective=True)
    trace = np.array(sol.objective_trace)
    assert trace.size >= 1
    assert np.all(np.diff(trace) <= 1e-12)


def test_permutation_invariance():
    # run to tight tolerances so ordering effects fall below 1e-10
    rng = np.random.default_rng(5)
    gram, linear = _random_problem(rng, 9)
    lam = 0.08
    tight = dict(tol=1e-13, kkt_tol=1e-11, max_iter=100_000)
    base = solve_direction(gram, linear, lam, **tight).beta
    perm = rng.permutation(9)
    permuted = solve_direction(gram[np.ix_(perm, perm)], linear[perm], lam, **tight).beta
    restored = np.empty_like(permuted)
    restored[perm] = permuted
    assert np.max(np.abs(restored - base)) <= 1e-10


def test_penalty_dominance():
    rng = np.random.default_rng(6)
    gram, linear = _random_problem(rng, 10)
    lam1, lam2 = 0.05, 0.2
    b1 = solve_direction(gram, linear, lam1).beta
    b2 = solve_direction(gram, linear, lam2).beta
    obj = lambda b: quadratic_objective(gram, linear, lam1, b)
    assert obj(b1) <= obj(b2) + 1e-12


def test_lambda_grid_and_path():
    rng = np.random.default_rng(7)
    gram, linear = _random_problem(rng, 7)
    path = lambda_path(gram, linear, n_lambdas=25)
    assert path.lambdas[0] == np.max(np.abs(linear))
    assert np.all(np.diff(path.lambdas) < 0)
    assert np.all(path.solutions[0].beta == 0.0)
    single = lambda_path(gram, linear, n_lambdas=1)
    assert single.lambdas.shape == (1,)
    assert np.all(single.solutions[0].beta == 0.0)
    with pytest.raises(DomainError):
        LambdaPath(lambdas=np.array([0.1, 0.2]), solutions=[])
    with pytest.raises(DomainError):
        lambda_grid(linear, n_lambdas=0)


def test_path_support_growth_mostly_monotone():
    rng = np.random.default_rng(8)
    good = 0
    total = 0
    for _ in range(5):
        gram, linear = _random_problem(rng, 12)
        path = lambda_path(gram, linear, n_lambdas=30)
        sizes = [sol.support.size for sol in path.solutions]
        grow = sum(1 for a, b in zip(sizes, sizes[1:]) if b >= a)
        good += grow
        total += len(sizes) - 1
    assert good / total >= 0.9


def test_nonconvergence_raises_with_best_iterate():
    rng = np.random.default_rng(9)
    gram, linear = _random_problem(rng, 20)
    with pytest.raises(ConvergenceError) as exc:
        solve_direction(gram, linear, 1e-4, max_iter=1)
    assert exc.value.best is not None
    assert exc.value.best.shape == (20,)
    assert exc.value.residual is not None


def test_input_validation():
    with pytest.raises(DomainError):
        solve_direction(np.eye(3) * 2.0, np.ones(3), 0.1)   # non-unit diagonal
    with pytest.raises(DomainError):
        solve_direction(np.eye(3), np.ones(3), -0.1)        # negative penalty
    with pytest.raises(DomainError):
        solve_direction(np.eye(3), np.ones(4), 0.1)         # shape mismatch


def test_solution_dataclass_contents():
    sol = solve_direction(np.eye(4), np.array([0.9, 0.0, 0.4, 0.0]), 0.5)
    assert isinstance(sol, SparseDirection)
    assert sol.lam == 0.5
    # soft threshold of an identity gram: beta_j = sign * (|l_j| - lam)_+
    assert np.allclose(sol.beta, [0.4, 0.0, 0.0, 0.0], atol=1e-10)
