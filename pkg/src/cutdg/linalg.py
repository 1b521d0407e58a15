"""Sparse symmetric solves and spectral condition numbers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DIRECT_LIMIT = 200_000
REFINE_STEPS = 3


class SolverError(RuntimeError):
    """Raised when a solve does not reach the requested residual."""

    def __init__(self, message, residual=np.nan):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass
class CondReport:
    lambda_max: float
    lambda_min: float
    kappa: float
    iterations: int
    converged: bool
    method: str = "lanczos"


def relative_residual(A, x, b):
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return r / nb if nb > 0 else r


def solve(A, b, tol=1e-10, method="auto"):
    """Solve ``A x = b`` for sparse SPD ``A``.

    ``method`` is ``"direct"`` (sparse LU), ``"cg"`` (Jacobi-preconditioned
    conjugate gradients) or ``"auto"``, which picks LU up to
    ``DIRECT_LIMIT`` unknowns.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if method == "auto":
        method = "direct" if n <= DIRECT_LIMIT else "cg"
    if method == "direct":
        try:
            lu = spla.splu(A.tocsc())
        except RuntimeError as exc:
            raise SolverError(f"sparse factorization failed: {exc}") from exc
        x = lu.solve(b)
        # iterative refinement recovers the residual on badly conditioned systems
        for _ in range(REFINE_STEPS):
            if not np.all(np.isfinite(x)) or relative_residual(A, x, b) <= tol:
                break
            x = x + lu.solve(b - A @ x)
    elif method == "cg":
        diag = A.diagonal()
        if np.any(diag <= 0):
            raise SolverError("non-positive diagonal, matrix is not SPD")
        M = sp.diags(1.0 / diag)
        x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=int(50 * np.sqrt(n)) + 1, M=M)
        if info != 0:
            raise SolverError("conjugate gradients did not converge", relative_residual(A, x, b))
    else:
        raise ValueError(f"unknown solve method {method!r}")
    res = relative_residual(A, x, b)
    if not np.all(np.isfinite(x)) or res > tol:
        raise SolverError("solve did not reach the residual tolerance", res)
    return x


def _power(A, tol, maxiter, rng):
    v = rng.standard_normal(A.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for it in range(1, maxiter + 1):
        w = A @ v
        new = float(v @ w)
        v = w / np.linalg.norm(w)
        if abs(new - lam) <= tol * abs(new):
            return abs(new), it, True
        lam = new
    return abs(lam), maxiter, False


def _inverse(A, tol, maxiter, rng):
    lu = spla.splu(sp.csc_matrix(A))
    v = rng.standard_normal(A.shape[0])
    v /= np.linalg.norm(v)
    mu = 0.0
    for it in range(1, maxiter + 1):
        w = lu.solve(v)
        new = float(v @ w)
        v = w / np.linalg.norm(w)
        if abs(new - mu) <= tol * abs(new):
            return 1.0 / abs(new), it, True
        mu = new
    return 1.0 / abs(mu), maxiter, False


def condition_number(A, tol=1e-4, method="lanczos", maxiter=20_000, seed=0):
    """Spectral condition number ``|λ|_max / |λ|_min`` of a symmetric matrix.

    ``"lanczos"`` uses implicitly restarted Lanczos (shift-invert at zero for
    the smallest magnitude), ``"power"`` plain power and inverse iteration,
    and ``"dense"`` a full symmetric eigendecomposition. Singular matrices
    report ``kappa = inf``.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    if method == "dense" or n <= 3:
        ev = np.abs(scipy.linalg.eigvalsh(A.toarray()))
        lmax, lmin = ev.max(), ev.min()
        return CondReport(lmax, lmin, lmax / lmin if lmin > 0 else np.inf, 1, True, "dense")
    if method == "power":
        rng = np.random.default_rng(seed)
        lmax, i1, c1 = _power(A, tol, maxiter, rng)
        try:
            lmin, i2, c2 = _inverse(A, tol, maxiter, rng)
        except RuntimeError:
            return CondReport(lmax, 0.0, np.inf, i1, False, "power")
        return CondReport(lmax, lmin, lmax / lmin, i1 + i2, c1 and c2, "power")
    if method != "lanczos":
        raise ValueError(f"unknown condition number method {method!r}")
    v0 = np.random.default_rng(seed).standard_normal(n)
    lmax = float(np.abs(spla.eigsh(A, k=1, which="LM", tol=tol, v0=v0,
                                   return_eigenvectors=False)[0]))
    try:
        lu = spla.splu(A.tocsc())
        op = spla.LinearOperator(A.shape, matvec=lu.solve, dtype=float)
        mu = spla.eigsh(op, k=1, which="LM", tol=tol, v0=v0, return_eigenvectors=False)[0]
        lmin = 1.0 / abs(float(mu))
    except (RuntimeError, spla.ArpackNoConvergence):
        return CondReport(lmax, 0.0, np.inf, 0, False, "lanczos")
    if not np.isfinite(lmin) or lmin == 0:
        return CondReport(lmax, 0.0, np.inf, 0, False, "lanczos")
    return CondReport(lmax, lmin, lmax / lmin, 0, True, "lanczos")
