import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from cutdg.linalg import SolverError, condition_number, relative_residual, solve
from cutdg.study import solve_problem
from cutdg.problems import make_problem

METHODS = ["lanczos", "power", "dense"]


def laplacian_1d(n):
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()


def random_spd(n, seed):
    B = np.random.default_rng(seed).normal(size=(n, n))
    return B.T @ B + np.eye(n)


@pytest.mark.parametrize("method", ["direct", "cg"])
def test_identity_solve(method):
    b = np.arange(1.0, 6.0)
    assert np.allclose(solve(sp.identity(5), b, method=method), b)


@pytest.mark.parametrize("method", ["direct", "cg"])
def test_tridiagonal_against_dense(method):
    A = laplacian_1d(5)
    b = np.array([1.0, -2.0, 0.5, 3.0, 1.0])
    x = solve(A, b, method=method)
    assert np.allclose(x, scipy.linalg.solve(A.toarray(), b), rtol=1e-10)
    assert relative_residual(A, x, b) <= 1e-10


def test_patch_solution_feeds_through():
    res = solve_problem(make_problem("patch_p1"), 8, 1, depth=0)
    assert res.errors.l2 <= 1e-9
    assert relative_residual(res.system.A, res.coefficients, res.system.b) <= 1e-10


def test_singular_solve_raises():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SolverError):
        solve(A, np.array([1.0, 0.0]))


def test_cg_rejects_indefinite_diagonal():
    A = sp.diags([1.0, -1.0, 2.0]).tocsr()
    with pytest.raises(SolverError):
        solve(A, np.ones(3), method="cg")


def test_unknown_solve_method():
    with pytest.raises(ValueError):
        solve(sp.identity(3), np.ones(3), method="qr")


@pytest.mark.parametrize("method", METHODS)
def test_diag_condition(method):
    rep = condition_number(sp.diags(np.linspace(1.0, 10.0, 8)), method=method, tol=1e-10)
    assert np.isclose(rep.kappa, 10.0, rtol=1e-6)


@pytest.mark.parametrize("method", METHODS)
def test_identity_condition(method):
    assert np.isclose(condition_number(sp.identity(12), method=method).kappa, 1.0)


def test_two_by_two():
    assert np.isclose(condition_number(sp.diags([1.0, 10.0])).kappa, 10.0)


@pytest.mark.parametrize("method", METHODS)
def test_random_spd_against_dense_oracle(method):
    A = random_spd(50, 7)
    ev = np.linalg.eigvalsh(A)
    rep = condition_number(sp.csr_matrix(A), method=method, tol=1e-8)
    assert abs(rep.kappa - ev[-1] / ev[0]) <= 1e-3 * ev[-1] / ev[0]
    assert rep.kappa >= 1.0 and rep.converged


def test_assembled_matrix_against_dense_oracle():
    res = solve_problem(make_problem("circle_sweep"), 12, 1, errors=False)
    A = res.system.A
    assert A.shape[0] <= 2000
    ev = np.abs(np.linalg.eigvalsh(A.toarray()))
    oracle = ev.max() / ev.min()
    for method in ("lanczos", "power"):
        rep = condition_number(A, method=method, tol=1e-8, maxiter=200_000)
        assert abs(rep.kappa - oracle) <= 1e-2 * oracle


@settings(max_examples=20, deadline=None)
@given(c=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
def test_scaling_invariance(c, seed):
    A = sp.csr_matrix(random_spd(20, seed))
    k1 = condition_number(A, tol=1e-10).kappa
    k2 = condition_number(c * A, tol=1e-10).kappa
    assert abs(k1 - k2) <= 1e-6 * k1


def test_singular_is_infinite():
    A = laplacian_1d(6).tolil()
    A[0, 0] = 1.0
    A[-1, -1] = 1.0  # pure Neumann: constants in the kernel
    rep = condition_number(A.tocsr())
    assert rep.kappa == np.inf and not rep.converged
    assert condition_number(A.tocsr(), method="dense").kappa > 1e12


def test_unknown_condition_method():
    with pytest.raises(ValueError):
        condition_number(sp.identity(5), method="qr")
