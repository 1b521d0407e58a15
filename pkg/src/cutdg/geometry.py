"""Level-set geometries and active/cut classification of mesh entities."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class Tag(IntEnum):
    INSIDE = -1
    CUT = 0
    OUTSIDE = 1


class LevelSet:
    """Signed scalar field, negative inside the domain.

    ``func`` and ``grad`` take an ``(n, dim)`` array. Without ``grad`` the
    gradient falls back to central differences.
    """

    def __init__(self, func, grad=None, dim=None, name="levelset"):
        self.func = func
        self._grad = grad
        self.dim = dim
        self.name = name

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.func(x), dtype=float).reshape(len(x))

    def gradient(self, x, step=1e-6):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self._grad is not None:
            return np.asarray(self._grad(x), dtype=float).reshape(x.shape)
        g = np.empty_like(x)
        for a in range(x.shape[1]):
            e = np.zeros(x.shape[1])
            e[a] = step
            g[:, a] = (self(x + e) - self(x - e)) / (2 * step)
        return g

    def normal(self, x):
        g = self.gradient(x)
        return g / np.linalg.norm(g, axis=1)[:, None]

    def __neg__(self):
        grad = None if self._grad is None else (lambda x: -self.gradient(x))
        return LevelSet(lambda x: -self(x), grad, self.dim, name=f"-{self.name}")

    def translate(self, offset):
        """Level set of the domain moved by ``offset``: x -> phi(x - offset)."""
        offset = np.asarray(offset, dtype=float)
        grad = None if self._grad is None else (lambda x: self.gradient(x - offset))
        return LevelSet(lambda x: self(x - offset), grad, self.dim,
                        name=f"{self.name}+{offset.tolist()}")

    def __repr__(self):
        return f"LevelSet({self.name!r}, dim={self.dim})"


def translate(phi, offset):
    return phi.translate(offset)


def _polar_flower(r0, r1):
    def f(x):
        r = np.hypot(x[:, 0], x[:, 1])
        return r - r0 - r1 * np.cos(np.arctan2(x[:, 1], x[:, 0]))

    def g(x):
        r = np.maximum(np.hypot(x[:, 0], x[:, 1]), 1e-300)
        th = np.arctan2(x[:, 1], x[:, 0])
        # d/dx atan2(y,x) = -y/r^2, d/dy = x/r^2
        s = r1 * np.sin(th)
        return np.column_stack([x[:, 0] / r - s * x[:, 1] / r**2,
                                x[:, 1] / r + s * x[:, 0] / r**2])
    return f, g


def flower2d(r0=0.6, r1=0.2):
    f, g = _polar_flower(r0, r1)
    return LevelSet(f, g, dim=2, name="flower2d")


def flower3d(r=0.5, r0=3.5):
    a = r / r0

    def f(x):
        rho = np.linalg.norm(x, axis=1)
        th = np.arctan2(x[:, 1], x[:, 0])
        return rho - r + a * np.cos(5 * th) * np.cos(np.pi * x[:, 2])

    def g(x):
        rho = np.maximum(np.linalg.norm(x, axis=1), 1e-300)
        rxy2 = np.maximum(x[:, 0]**2 + x[:, 1]**2, 1e-300)
        th = np.arctan2(x[:, 1], x[:, 0])
        cz = np.cos(np.pi * x[:, 2])
        dth = -5 * a * np.sin(5 * th) * cz
        return np.column_stack([
            x[:, 0] / rho - dth * x[:, 1] / rxy2,
            x[:, 1] / rho + dth * x[:, 0] / rxy2,
            x[:, 2] / rho - a * np.pi * np.cos(5 * th) * np.sin(np.pi * x[:, 2]),
        ])
    return LevelSet(f, g, dim=3, name="flower3d")


def ball(radius=0.25, center=None, dim=3):
    """Squared-distance ball ``|x - c|^2 - r^2`` (circle when ``dim=2``)."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    return LevelSet(lambda x: np.sum((x - c) ** 2, axis=1) - radius**2,
                    lambda x: 2 * (x - c), dim=dim, name=f"ball{dim}d")


def sphere3d(radius=0.25, center=None):
    return ball(radius, center, dim=3)


def circle2d(radius=0.25, center=None):
    return ball(radius, center, dim=2)


def half_plane(normal, offset, dim=None):
    """``n . x - offset`` with ``n`` normalised."""
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    return LevelSet(lambda x: x @ n - offset,
                    lambda x: np.broadcast_to(n, x.shape).copy(),
                    dim=len(n) if dim is None else dim, name="half_plane")


def _min_distance_union(centers, radii, masks):
    """min_k (|(x - c_k) * m_k| - r_k); mask zeroes ignored axes (cylinders)."""
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    masks = np.asarray(masks, dtype=float)

    def dists(x):
        d = (x[:, None, :] - centers[None]) * masks[None]
        return d, np.linalg.norm(d, axis=2)

    def f(x):
        _, r = dists(x)
        return np.min(r - radii, axis=1)

    def g(x):
        d, r = dists(x)
        k = np.argmin(r - radii, axis=1)
        rows = np.arange(len(x))
        return d[rows, k] / np.maximum(r[rows, k], 1e-300)[:, None]
    return f, g


def eight_balls(radius=0.3, offset=0.5):
    centers = [(sx * offset, sy * offset, sz * offset)
               for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    f, g = _min_distance_union(centers, [radius] * 8, np.ones((8, 3)))
    return LevelSet(f, g, dim=3, name="eight_balls")


def corner_balls_cylinder(ball_radius=0.8, cylinder_radius=0.6, corner=1.0):
    centers = [(sx * corner, sy * corner, sz * corner)
               for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    centers.append((0.0, 0.0, 0.0))
    masks = np.ones((9, 3))
    masks[8, 0] = 0.0  # cylinder about the x-axis
    f, g = _min_distance_union(centers, [ball_radius] * 8 + [cylinder_radius], masks)
    return LevelSet(f, g, dim=3, name="corner_balls_cylinder")


CATALOGUE = {
    "flower2d": flower2d,
    "flower3d": flower3d,
    "sphere3d": sphere3d,
    "circle2d": circle2d,
    "ball": ball,
    "eight_balls": eight_balls,
    "corner_balls_cylinder": corner_balls_cylinder,
    "half_plane": half_plane,
}


def builtin_levelsets():
    """Name -> factory mapping of the shipped geometries."""
    return dict(CATALOGUE)


def make_levelset(name, *args, **kwargs):
    try:
        factory = CATALOGUE[name]
    except KeyError:
        raise KeyError(f"unknown level set {name!r}; known: {sorted(CATALOGUE)}") from None
    return factory(*args, **kwargs)


def levelset_from_values(name, values):
    """Catalogue entry from a flat number list, as written in config files.

    ``half_plane n_1 .. n_d offset``; ``circle2d``/``sphere3d`` take the
    radius then optionally the center; other entries take their scalar
    arguments positionally.
    """
    values = [float(v) for v in values]
    if name == "half_plane":
        if len(values) not in (3, 4):
            raise ValueError("half_plane expects the normal components then the offset")
        return half_plane(values[:-1], values[-1])
    if name in ("circle2d", "sphere3d"):
        dim = 2 if name == "circle2d" else 3
        if len(values) not in (0, 1, 1 + dim):
            raise ValueError(f"{name} expects a radius and optionally {dim} center coordinates")
        center = values[1:] if len(values) > 1 else None
        return make_levelset(name, *values[:1], center=center)
    return make_levelset(name, *values)


def perturbed_values(phi, points, h, eps=1e-12):
    """Level-set values with |phi| <= eps*h pushed to +eps*h."""
    v = phi(points)
    tol = eps * h
    return np.where(np.abs(v) <= tol, tol, v)


@dataclass(frozen=True, eq=False)
class DomainClassification:
    """Element tags and derived entity sets for one level-set domain.

    ``side`` says which sign of ``phi`` is the physical domain:
    ``Tag.INSIDE`` for {phi < 0}, ``Tag.OUTSIDE`` for the complement.
    ``vertex_values`` are the perturbed values oriented so that negative
    means physical.
    """

    phi: LevelSet
    side: Tag
    eps: float
    vertex_values: np.ndarray
    element_tag: np.ndarray
    active_elements: np.ndarray
    cut_elements: np.ndarray
    interior_faces: np.ndarray
    ghost_faces: np.ndarray
    boundary_faces_fitted: np.ndarray

    @property
    def inside_elements(self):
        return np.flatnonzero(self.element_tag == Tag.INSIDE)

    @property
    def active_mask(self):
        mask = np.zeros(len(self.element_tag), dtype=bool)
        mask[self.active_elements] = True
        return mask


def _classify_values(mesh, phi, side, eps, vals):
    neg = vals[mesh.elements] < 0
    tag = np.full(mesh.n_elements, int(Tag.CUT), dtype=np.int8)
    tag[neg.all(axis=1)] = Tag.INSIDE
    tag[(~neg).all(axis=1)] = Tag.OUTSIDE
    active = tag != Tag.OUTSIDE
    cut = tag == Tag.CUT

    left, right = mesh.face_left, mesh.face_right
    has_right = right >= 0
    right_safe = np.where(has_right, right, 0)
    both_active = has_right & active[left] & active[right_safe]
    return DomainClassification(
        phi=phi, side=Tag(side), eps=eps, vertex_values=vals, element_tag=tag,
        active_elements=np.flatnonzero(active), cut_elements=np.flatnonzero(cut),
        interior_faces=np.flatnonzero(both_active),
        ghost_faces=np.flatnonzero(both_active & (cut[left] | cut[right_safe])),
        boundary_faces_fitted=np.flatnonzero(~has_right & active[left]))


def classify(mesh, phi, eps=1e-12, side=Tag.INSIDE):
    """Tag elements Inside/Outside/Cut by perturbed vertex signs.

    Vertex values with ``|phi| <= eps*h`` are pushed to ``+eps*h`` before
    the signs are read, so the classification is total.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    vals = perturbed_values(phi, mesh.vertices, mesh.h, eps)
    if side == Tag.OUTSIDE:
        vals = -vals
    return _classify_values(mesh, phi, side, eps, vals)


@dataclass(frozen=True, eq=False)
class TwoDomainClassification:
    """Per-side classifications; side 1 is {phi < 0}, side 2 is {phi > 0}."""

    side1: DomainClassification
    side2: DomainClassification

    @property
    def cut_elements(self):
        return self.side1.cut_elements

    def __getitem__(self, i):
        return (self.side1, self.side2)[i - 1]


def classify_two_domain(mesh, phi, eps=1e-12):
    """Classify both subdomains with one shared perturbation.

    A vertex pushed outside of side 1 lands inside side 2, so both sides
    see the same cut elements.
    """
    return TwoDomainClassification(classify(mesh, phi, eps, Tag.INSIDE),
                                   classify(mesh, phi, eps, Tag.OUTSIDE))
