"""Estimator-style front end: ``fit`` solves, ``predict`` evaluates u_h."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from . import _validation as val
from .assembly import BvpParams, GhostPenalty, InterfaceParams, Weighting
from .linalg import condition_number, solve
from .problems import InterfaceProblem, ManufacturedProblem, make_problem
from .study import assemble, compute_errors, discretize


class _CutDGBase(RegressorMixin, BaseEstimator):

    _problem_type = ManufacturedProblem

    def _resolve_problem(self):
        problem = make_problem(self.problem) if isinstance(self.problem, str) else self.problem
        if not isinstance(problem, self._problem_type):
            raise ValueError(f"{type(self).__name__} needs a {self._problem_type.__name__}, "
                             f"got {type(problem).__name__}")
        return problem

    def _validate(self):
        val.check_order(self.order)
        val.check_positive_int(self.n, "n")
        val.check_positive(self.beta, "beta")
        val.check_gamma(self.gamma)
        val.check_nonnegative(self.gamma_proj, "gamma_proj")
        val.check_positive(self.c_s, "c_s")
        GhostPenalty.parse(self.gp_variant)
        if self.penalty_length not in ("spacing", "diameter"):
            raise ValueError(f"penalty_length must be 'spacing' or 'diameter', "
                             f"got {self.penalty_length!r}")
        if self.geometry_depth is not None:
            val.check_nonnegative(self.geometry_depth, "geometry_depth")
        val.check_positive_int(self.quad_order_factor, "quad_order_factor")

    def fit(self, X=None, y=None):
        """Discretize, assemble and solve the configured problem.

        ``X`` and ``y`` are ignored; the data come from the manufactured
        problem. They are accepted so the estimator composes with tooling
        that always passes them.
        """
        self._validate()
        problem = self._resolve_problem()
        params = self._params(problem)
        depth = self.order + 1 if self.geometry_depth is None else int(self.geometry_depth)
        quad_order = max(self.quad_order_factor * self.order, 1)
        disc = discretize(problem, self.n, self.order, depth, quad_order, self.eps)
        system = assemble(problem, disc, params)
        self.problem_ = problem
        self.params_ = params
        self.discretization_ = disc
        self.system_ = system
        self.coef_ = solve(system.A, system.b, tol=self.tol)
        self.n_dofs_ = system.n_dofs
        return self

    def _side_values(self, X, side):
        disc = self.discretization_
        space = disc.spaces[side]
        coef = self.system_.split(self.coef_)[side]
        elements = disc.mesh.locate(X)
        out = np.full(len(X), np.nan)
        ok = elements >= 0
        ok[ok] = space.local_index[elements[ok]] >= 0
        if np.any(ok):
            out[ok] = space.field_values(coef, elements[ok], X[ok])
        return out

    def errors(self):
        """ErrorReport of the fitted solution against the exact one."""
        val.check_is_fitted(self)
        return compute_errors(self.discretization_, self.coef_, self.problem_, self.params_)

    def condition_number(self, **kwargs):
        """CondReport of the assembled system matrix."""
        val.check_is_fitted(self)
        return condition_number(self.system_.A, **kwargs)


class CutDGPoisson(_CutDGBase):
    """Stabilized cut DG solver for -Δu = f in Ω, u = g on ∂Ω.

    Parameters
    ----------
    problem : str or ManufacturedProblem
        Catalogue name (``"flower2d"``, ``"patch_p2"``, ...) or an instance.
    order : int
        Polynomial degree 1, 2 or 3.
    n : int
        Background cells per axis.
    gp_variant : str
        Ghost penalty: ``face_jumps``, ``full_gradient``, ``projection_p1``,
        ``projection_p2``, ``projection_p3`` or ``none``.
    beta : float
        Nitsche and interior penalty parameter.
    gamma : sequence of float
        Face-jump ghost penalty parameters γ_0..γ_k.
    penalty_length : {"spacing", "diameter"}
        Length h in the h^-1 penalties and h^(2j-1) ghost weights.
    """

    def __init__(self, problem="flower2d", order=1, n=16, gp_variant="face_jumps", beta=50.0,
                 gamma=(50.0, 0.1, 0.1, 0.1), gamma_proj=0.1, c_s=0.1,
                 penalty_length="spacing", geometry_depth=None, quad_order_factor=2,
                 eps=1e-12, tol=1e-10):
        self.problem = problem
        self.order = order
        self.n = n
        self.gp_variant = gp_variant
        self.beta = beta
        self.gamma = gamma
        self.gamma_proj = gamma_proj
        self.c_s = c_s
        self.penalty_length = penalty_length
        self.geometry_depth = geometry_depth
        self.quad_order_factor = quad_order_factor
        self.eps = eps
        self.tol = tol

    def _params(self, problem):
        return BvpParams(self.beta, val.check_gamma(self.gamma), self.gp_variant,
                         self.gamma_proj, self.c_s, self.penalty_length)

    def predict(self, X):
        """u_h at points; NaN where no active element contains the point."""
        val.check_is_fitted(self)
        X = val.check_points(X, self.discretization_.mesh.dim)
        return self._side_values(X, 0)


class CutDGInterface(_CutDGBase):
    """Stabilized cut DG solver for the two-phase problem -∇·(κ_i∇u_i) = f_i.

    Parameters are those of :class:`CutDGPoisson` plus the interface
    averaging ``weighting`` (``harmonic`` or ``cut_area``), the interface
    penalty ``beta_gamma_tilde`` and ``scale_ghost_by_kappa``. The
    diffusion coefficients come from the problem.
    """

    _problem_type = InterfaceProblem

    def __init__(self, problem="if_flower_a", order=1, n=16, gp_variant="face_jumps",
                 beta=50.0, gamma=(50.0, 0.1, 0.1, 0.1), gamma_proj=0.1, c_s=0.1,
                 weighting="harmonic", beta_gamma_tilde=50.0, scale_ghost_by_kappa=True,
                 penalty_length="spacing", geometry_depth=None, quad_order_factor=2,
                 eps=1e-12, tol=1e-10):
        self.problem = problem
        self.order = order
        self.n = n
        self.gp_variant = gp_variant
        self.beta = beta
        self.gamma = gamma
        self.gamma_proj = gamma_proj
        self.c_s = c_s
        self.weighting = weighting
        self.beta_gamma_tilde = beta_gamma_tilde
        self.scale_ghost_by_kappa = scale_ghost_by_kappa
        self.penalty_length = penalty_length
        self.geometry_depth = geometry_depth
        self.quad_order_factor = quad_order_factor
        self.eps = eps
        self.tol = tol

    def _validate(self):
        super()._validate()
        Weighting.parse(self.weighting)
        val.check_positive(self.beta_gamma_tilde, "beta_gamma_tilde")

    def _params(self, problem):
        k1, k2 = problem.kappa
        return InterfaceParams(k1, k2, self.beta, self.beta_gamma_tilde, self.weighting,
                               val.check_gamma(self.gamma), self.gp_variant, self.gamma_proj,
                               self.c_s, bool(self.scale_ghost_by_kappa), self.penalty_length)

    def predict(self, X):
        """u_1 where φ < 0, u_2 elsewhere; NaN outside the active meshes."""
        val.check_is_fitted(self)
        X = val.check_points(X, self.discretization_.mesh.dim)
        inside = self.problem_.levelset(X) < 0
        out = self._side_values(X, 1)
        out[inside] = self._side_values(X[inside], 0)
        return out
