"""Manufactured solutions with all PDE data derived symbolically."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy

from . import geometry

X, Y, Z = sympy.symbols("x y z", real=True)
_SYMS = {2: (X, Y), 3: (X, Y, Z)}


def _lambdify(expr, dim):
    syms = _SYMS[dim]
    fn = sympy.lambdify(syms, expr, "numpy")

    def call(points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = fn(*points.T)
        return np.broadcast_to(np.asarray(out, dtype=float), (len(points),)).copy()
    return call


@dataclass
class ScalarField:
    """Symbolic scalar with numeric value, gradient and flux source."""

    expr: sympy.Expr
    dim: int
    kappa: float = 1.0

    def __post_init__(self):
        syms = _SYMS[self.dim]
        self.expr = sympy.sympify(self.expr)
        self._value = _lambdify(self.expr, self.dim)
        self._grad = [_lambdify(sympy.diff(self.expr, s), self.dim) for s in syms]
        lap = sum(sympy.diff(self.expr, s, 2) for s in syms)
        self._source = _lambdify(sympy.simplify(-self.kappa * lap), self.dim)

    def __call__(self, points):
        return self._value(points)

    def gradient(self, points):
        return np.column_stack([g(points) for g in self._grad])

    def source(self, points):
        """-κ Δu."""
        return self._source(points)


@dataclass
class ManufacturedProblem:
    """Poisson problem on ``{phi < 0} ∩ box`` with exact solution ``u``."""

    name: str
    levelset: geometry.LevelSet
    u: ScalarField
    box: np.ndarray
    description: str = ""

    @property
    def dim(self):
        return self.u.dim

    def f(self, points):
        return self.u.source(points)

    def g(self, points):
        return self.u(points)

    def translated(self, offset):
        offset = np.asarray(offset, dtype=float)
        return ManufacturedProblem(f"{self.name}+{offset.tolist()}",
                                   self.levelset.translate(offset), self.u, self.box,
                                   self.description)


@dataclass
class InterfaceProblem:
    """Two-phase problem; Ω₁ = {phi < 0}, Ω₂ = box minus Ω₁."""

    name: str
    levelset: geometry.LevelSet
    u1: ScalarField
    u2: ScalarField
    box: np.ndarray
    description: str = ""

    @property
    def dim(self):
        return self.u1.dim

    @property
    def kappa(self):
        return self.u1.kappa, self.u2.kappa

    def fields(self):
        return self.u1, self.u2

    def f(self):
        return self.u1.source, self.u2.source

    def g(self):
        return self.u1, self.u2

    def g_D(self, points):
        return self.u1(points) - self.u2(points)

    def g_N(self, points, normals):
        """Flux jump κ1∂_n u1 - κ2∂_n u2, normals out of Ω₁."""
        q1 = self.u1.kappa * np.einsum("pd,pd->p", self.u1.gradient(points), normals)
        q2 = self.u2.kappa * np.einsum("pd,pd->p", self.u2.gradient(points), normals)
        return q1 - q2


def _box(dim, half):
    return np.array([[-half, half]] * dim, dtype=float)


TRIG2D = sympy.cos(2 * sympy.pi * X) * sympy.cos(2 * sympy.pi * Y) \
    + sympy.sin(2 * sympy.pi * X) * sympy.sin(2 * sympy.pi * Y)
_S3 = X + Y + Z
EXP3D = sympy.exp(_S3) * sympy.cos(_S3) * sympy.sin(_S3)
SIN3 = sympy.sin(3 * sympy.pi * X) + sympy.sin(3 * sympy.pi * Y) + sympy.sin(3 * sympy.pi * Z)
COS3 = sympy.cos(3 * sympy.pi * X) + sympy.cos(3 * sympy.pi * Y) + sympy.cos(3 * sympy.pi * Z)

# generic half-plane used for polynomial reproduction checks
PATCH_NORMAL = (1.0, np.sqrt(2.0) - 1.0)
PATCH_OFFSET = 1.0 / np.pi - 0.05


def patch_polynomial(p, dim=2):
    """A dense polynomial of total degree ``p`` (all monomials present)."""
    from .space import exponents
    syms = _SYMS[dim]
    expr = sympy.Integer(0)
    for i, alpha in enumerate(exponents(dim, p)):
        c = sympy.Rational((-1) ** i * (i + 2), i + 3)
        expr += c * sympy.Mul(*[s ** int(a) for s, a in zip(syms, alpha)])
    return expr


def flower2d_problem():
    return ManufacturedProblem("flower2d", geometry.flower2d(), ScalarField(TRIG2D, 2),
                               _box(2, 1.1), "2D flower, trigonometric solution")


def flower3d_problem():
    return ManufacturedProblem("flower3d", geometry.flower3d(), ScalarField(EXP3D, 3),
                               _box(3, 0.8), "3D flower, exp-cos-sin solution")


def patch_problem(p):
    return ManufacturedProblem(f"patch_p{p}", geometry.half_plane(PATCH_NORMAL, PATCH_OFFSET),
                               ScalarField(patch_polynomial(p), 2), _box(2, 1.0),
                               f"half-plane, global polynomial of degree {p}")


def circle_sweep_problem():
    return ManufacturedProblem("circle_sweep", geometry.circle2d(0.25), ScalarField(TRIG2D, 2),
                               _box(2, 0.51), "circle r=0.25 for translation sweeps")


def flower_sweep_problem():
    return ManufacturedProblem("flower_sweep", geometry.flower2d(), ScalarField(TRIG2D, 2),
                               _box(2, 0.8), "2D flower on the tight box")


def sphere_sweep_problem():
    return ManufacturedProblem("sphere_sweep", geometry.sphere3d(0.25), ScalarField(EXP3D, 3),
                               _box(3, 0.51), "sphere r=0.25 for condition sweeps")


def interface_flower_a():
    return InterfaceProblem("if_flower_a", geometry.flower2d(), ScalarField(TRIG2D, 2),
                            ScalarField(TRIG2D, 2), _box(2, 1.1),
                            "kappa 1/1, continuous solution and flux")


def _contrast_pair(kappa2, u2_scale):
    a = sympy.sin(sympy.pi * (X - Y)) * sympy.cos(sympy.pi * (X + Y))
    b = sympy.sin(sympy.pi * (X + Y) / 2) * sympy.cos(sympy.pi * (X + Y) / 2)
    return ScalarField(a, 2, 1.0), ScalarField(b / u2_scale, 2, kappa2)


def interface_flower_b(kappa2=1e6):
    """High contrast; ``u2`` carries the factor 1/κ1 (= 1)."""
    u1, u2 = _contrast_pair(kappa2, 1.0)
    return InterfaceProblem("if_flower_b", geometry.flower2d(), u1, u2, _box(2, 1.1),
                            "kappa 1/1e6, u2 scaled by 1/kappa1")


def interface_flower_b_alt(kappa2=1e6):
    """High contrast; ``u2`` carries the factor 1/κ2."""
    u1, u2 = _contrast_pair(kappa2, kappa2)
    return InterfaceProblem("if_flower_b_alt", geometry.flower2d(), u1, u2, _box(2, 1.1),
                            "kappa 1/1e6, u2 scaled by 1/kappa2")


def interface_eight_balls():
    return InterfaceProblem("if_eight_balls", geometry.eight_balls(), ScalarField(SIN3, 3),
                            ScalarField(SIN3, 3), _box(3, 1.1), "eight balls, kappa 1/1")


def interface_corner_cylinder(kappa2=10.0):
    return InterfaceProblem("if_corner_cylinder", geometry.corner_balls_cylinder(),
                            ScalarField(SIN3, 3, 1.0), ScalarField(COS3 / kappa2, 3, kappa2),
                            _box(3, 1.1), "corner balls and cylinder, kappa 1/10")


def _patch(p):
    return lambda: patch_problem(p)


PROBLEMS = {
    "flower2d": flower2d_problem,
    "flower3d": flower3d_problem,
    "patch_p1": _patch(1),
    "patch_p2": _patch(2),
    "patch_p3": _patch(3),
    "circle_sweep": circle_sweep_problem,
    "flower_sweep": flower_sweep_problem,
    "sphere_sweep": sphere_sweep_problem,
}

INTERFACE_PROBLEMS = {
    "if_flower_a": interface_flower_a,
    "if_flower_b": interface_flower_b,
    "if_flower_b_alt": interface_flower_b_alt,
    "if_eight_balls": interface_eight_balls,
    "if_corner_cylinder": interface_corner_cylinder,
}


def make_problem(name):
    if name in PROBLEMS:
        return PROBLEMS[name]()
    if name in INTERFACE_PROBLEMS:
        return INTERFACE_PROBLEMS[name]()
    raise KeyError(f"unknown problem {name!r}; known: "
                   f"{sorted(PROBLEMS) + sorted(INTERFACE_PROBLEMS)}")


def is_interface(problem):
    return isinstance(problem, InterfaceProblem)
