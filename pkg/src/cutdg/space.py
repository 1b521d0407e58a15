"""Broken polynomial spaces with per-element orthonormal modal bases."""

from __future__ import annotations

import itertools
from math import comb, factorial

import numpy as np

from .quadrature import full_volume_rules


def exponents(dim, k):
    """Monomial exponents of total degree <= k, graded then lexicographic."""
    out = []
    for deg in range(k + 1):
        for combo in itertools.product(range(deg + 1), repeat=dim):
            if sum(combo) == deg:
                out.append(combo[::-1])
    return np.array(sorted(out, key=lambda e: (sum(e), tuple(-np.array(e)))), dtype=int)


def multi_indices(dim, j):
    return [a for a in itertools.product(range(j + 1), repeat=dim) if sum(a) == j]


def monomial_derivative(xi, exps, alpha):
    """D^alpha of every monomial xi^beta at the points ``xi`` (n, dim)."""
    alpha = np.asarray(alpha, dtype=int)
    n, dim = xi.shape
    kmax = int(exps.max()) if exps.size else 0
    # powers[a][e] = xi_a ** e
    powers = []
    for a in range(dim):
        col = [np.ones(n)]
        for _ in range(kmax):
            col.append(col[-1] * xi[:, a])
        powers.append(col)
    out = np.zeros((n, len(exps)))
    for b, beta in enumerate(exps):
        red = beta - alpha
        if np.any(red < 0):
            continue
        coef = 1.0
        for a in range(dim):
            for t in range(alpha[a]):
                coef *= beta[a] - t
        val = np.full(n, coef)
        for a in range(dim):
            if red[a]:
                val = val * powers[a][red[a]]
        out[:, b] = val
    return out


class BrokenSpace:
    """P_k on each active element, orthonormal in L2 over the full element.

    Parameters
    ----------
    mesh : BackgroundMesh
    elements : array_like
        Active background element ids; DOFs are contiguous per element in
        this order.
    order : int
        Polynomial degree k in {1, 2, 3} (0 also works).
    """

    def __init__(self, mesh, elements, order):
        if order not in (0, 1, 2, 3):
            raise ValueError(f"polynomial order must be in 0..3, got {order}")
        self.mesh = mesh
        self.order = int(order)
        self.dim = mesh.dim
        self.elements = np.asarray(elements, dtype=int)
        self.exps = exponents(self.dim, self.order)
        self.n_local = comb(self.order + self.dim, self.dim)
        self.n_dofs = len(self.elements) * self.n_local
        self.local_index = np.full(mesh.n_elements, -1, dtype=int)
        self.local_index[self.elements] = np.arange(len(self.elements))
        self._build_basis()

    def _build_basis(self):
        mesh = self.mesh
        verts = mesh.element_vertices(self.elements)
        self.centers = verts.mean(axis=1)
        self.scale = 0.5 * mesh.diameters()[self.elements]
        rel = (verts - self.centers[:, None]) / self.scale[:, None, None]
        key = np.round(rel.reshape(len(rel), (self.dim + 1) * self.dim), 10)
        classes, inverse = np.unique(key, axis=0, return_inverse=True)
        self.element_class = inverse.ravel()
        rep = np.array([np.flatnonzero(self.element_class == c)[0] for c in range(len(classes))],
                       dtype=int)
        rule = full_volume_rules(mesh, self.elements[rep], 2 * self.order + 2)
        self.class_coef = np.empty((len(rep), self.n_local, self.n_local))
        own = self.local_index[rule.owner]
        for c, e in enumerate(rep):
            sel = own == e
            m = self._mono(rule.points[sel], np.full(sel.sum(), e), (0,) * self.dim)
            gram = (m * rule.weights[sel, None]).T @ m
            chol = np.linalg.cholesky(gram)
            self.class_coef[c] = np.linalg.inv(chol)

    def _xi(self, points, local):
        return (points - self.centers[local]) / self.scale[local, None]

    def _mono(self, points, local, alpha):
        return monomial_derivative(self._xi(points, local), self.exps, alpha)

    def dof_slice(self, element):
        i = self.local_index[element]
        if i < 0:
            raise KeyError(f"element {element} is not active")
        return slice(i * self.n_local, (i + 1) * self.n_local)

    def dofs(self, elements):
        """(n, n_local) global DOF indices of background elements."""
        loc = self.local_index[np.asarray(elements, dtype=int)]
        if np.any(loc < 0):
            raise KeyError("inactive element requested")
        return loc[:, None] * self.n_local + np.arange(self.n_local)[None, :]

    def derivative(self, elements, points, alpha):
        """D^alpha of all basis functions; ``elements`` gives the owner per point."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        local = self.local_index[np.asarray(elements, dtype=int)]
        if np.any(local < 0):
            raise KeyError("inactive element requested")
        m = self._mono(points, local, alpha)
        m /= self.scale[local, None] ** sum(alpha)
        out = np.empty_like(m)
        cls = self.element_class[local]
        for c in np.unique(cls):
            sel = cls == c
            out[sel] = m[sel] @ self.class_coef[c].T
        return out

    def eval(self, elements, points):
        return self.derivative(elements, points, (0,) * self.dim)

    def eval_grad(self, elements, points):
        """(n, n_local, dim) basis gradients."""
        return np.stack([self.derivative(elements, points, tuple(np.eye(self.dim, dtype=int)[a]))
                         for a in range(self.dim)], axis=-1)

    def normal_derivative(self, elements, points, normals, j):
        """Sum over |alpha| = j of D^alpha v n^alpha / alpha! per basis function."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        normals = np.broadcast_to(np.asarray(normals, dtype=float), points.shape)
        if j > self.order:
            return np.zeros((len(points), self.n_local))
        out = np.zeros((len(points), self.n_local))
        for alpha in multi_indices(self.dim, j):
            w = np.prod(normals ** np.array(alpha), axis=1)
            w /= np.prod([factorial(a) for a in alpha])
            out += w[:, None] * self.derivative(elements, points, alpha)
        return out

    # --- field helpers ------------------------------------------------------

    def field_values(self, coef, elements, points):
        basis = self.eval(elements, points)
        return np.einsum("pb,pb->p", basis, coef[self.dofs(elements)])

    def field_gradients(self, coef, elements, points):
        grad = self.eval_grad(elements, points)
        return np.einsum("pbd,pb->pd", grad, coef[self.dofs(elements)])

    def l2_project(self, f, order=None):
        """Element-wise L2 projection of ``f`` over the full active elements."""
        order = 2 * self.order + 2 if order is None else order
        rule = full_volume_rules(self.mesh, self.elements, order)
        basis = self.eval(rule.owner, rule.points)
        vals = np.asarray(f(rule.points), dtype=float)
        contrib = basis * (rule.weights * vals)[:, None]
        coef = np.zeros(self.n_dofs)
        np.add.at(coef, self.dofs(rule.owner), contrib)
        return coef

    def mass_matrix_full(self, order=None):
        """Block-diagonal element mass matrices over full elements, (E, nb, nb)."""
        order = max(2 * self.order, 1) if order is None else order
        rule = full_volume_rules(self.mesh, self.elements, order)
        basis = self.eval(rule.owner, rule.points)
        blocks = np.zeros((len(self.elements), self.n_local, self.n_local))
        np.add.at(blocks, self.local_index[rule.owner],
                  np.einsum("p,pi,pj->pij", rule.weights, basis, basis))
        return blocks
