"""Sparse assembly of the stabilized cut DG systems.

Jumps on an interior face are ``v_left - v_right`` with the face normal
pointing from left to right; averages are arithmetic. Boundary and
interface normals point out of the physical (sub)domain.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from math import comb, factorial

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .quadrature import full_face_rules, full_volume_rules, reference_rule
from .space import exponents, monomial_derivative


class GhostPenalty(str, Enum):
    FACE_JUMPS = "face_jumps"
    FULL_GRADIENT = "full_gradient"
    PROJECTION_P1 = "projection_p1"
    PROJECTION_P2 = "projection_p2"
    PROJECTION_P3 = "projection_p3"
    NONE = "none"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"facejumps": "face_jumps", "fullgradient": "full_gradient",
                   "projectionp1": "projection_p1", "projectionp2": "projection_p2",
                   "projectionp3": "projection_p3", "p1": "projection_p1",
                   "p2": "projection_p2", "p3": "projection_p3"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown ghost penalty {value!r}; "
                             f"choose from {[v.value for v in cls]}") from None


class Weighting(str, Enum):
    HARMONIC = "harmonic"
    CUT_AREA = "cut_area"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        return cls({"cutarea": "cut_area"}.get(key, key))


class SingularSystemWarning(RuntimeWarning):
    pass


def _check_length_mode(mode):
    if mode not in ("spacing", "diameter"):
        raise ValueError(f"penalty_length must be 'spacing' or 'diameter', got {mode!r}")


def penalty_length(mesh, mode="spacing"):
    """Global length scale h of the penalties.

    ``"spacing"`` is the grid spacing of the structured mesh, ``"diameter"``
    the maximal element diameter ``mesh.h``.
    """
    _check_length_mode(mode)
    return float(np.max(mesh.cell_size)) if mode == "spacing" else float(mesh.h)


def _default_gamma():
    return (50.0, 0.1, 0.1, 0.1)


@dataclass
class BvpParams:
    """Penalty parameters of the boundary-value discretization."""

    beta: float = 50.0
    gamma: tuple = field(default_factory=_default_gamma)
    gp_variant: GhostPenalty = GhostPenalty.FACE_JUMPS
    gamma_proj: float = 0.1
    c_s: float = 0.1
    penalty_length: str = "spacing"

    def __post_init__(self):
        self.gp_variant = GhostPenalty.parse(self.gp_variant)
        self.gamma = tuple(float(g) for g in self.gamma)
        _check_length_mode(self.penalty_length)
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if any(g < 0 for g in self.gamma) or self.gamma_proj < 0:
            raise ValueError("ghost penalty parameters must be non-negative")
        if self.c_s <= 0:
            raise ValueError("c_s must be positive")

    def gamma_j(self, j):
        return self.gamma[j] if j < len(self.gamma) else self.gamma[-1]

    def scaled(self, factor):
        """Copy with every ghost penalty parameter multiplied by ``factor``."""
        return BvpParams(self.beta, tuple(g * factor for g in self.gamma), self.gp_variant,
                         self.gamma_proj * factor, self.c_s, self.penalty_length)


@dataclass
class InterfaceParams:
    """Diffusion contrast, penalties and weighting of the interface problem."""

    kappa1: float = 1.0
    kappa2: float = 1.0
    beta_face: float = 50.0
    beta_gamma_tilde: float = 50.0
    weighting: Weighting = Weighting.HARMONIC
    gamma: tuple = field(default_factory=_default_gamma)
    gp_variant: GhostPenalty = GhostPenalty.FACE_JUMPS
    gamma_proj: float = 0.1
    c_s: float = 0.1
    scale_ghost_by_kappa: bool = True
    penalty_length: str = "spacing"

    def __post_init__(self):
        _check_length_mode(self.penalty_length)
        self.weighting = Weighting.parse(self.weighting)
        self.gp_variant = GhostPenalty.parse(self.gp_variant)
        self.gamma = tuple(float(g) for g in self.gamma)
        if self.kappa1 <= 0 or self.kappa2 <= 0:
            raise ValueError("diffusion coefficients must be positive")
        if self.beta_face <= 0 or self.beta_gamma_tilde <= 0:
            raise ValueError("penalty parameters must be positive")

    @property
    def omega(self):
        k1, k2 = self.kappa1, self.kappa2
        return k2 / (k1 + k2), k1 / (k1 + k2)

    @property
    def beta_gamma(self):
        k1, k2 = self.kappa1, self.kappa2
        return self.beta_gamma_tilde * 2 * k1 * k2 / (k1 + k2)

    def side_params(self, i):
        """BvpParams for the per-side ghost penalty of subdomain ``i``."""
        scale = (self.kappa1, self.kappa2)[i - 1] if self.scale_ghost_by_kappa else 1.0
        return BvpParams(self.beta_face, tuple(g * scale for g in self.gamma), self.gp_variant,
                         self.gamma_proj * scale, self.c_s, self.penalty_length)


@dataclass
class SystemOperator:
    """Assembled sparse symmetric matrix and load vector."""

    A: sp.csr_matrix
    b: np.ndarray
    spaces: tuple
    offsets: tuple

    @property
    def n_dofs(self):
        return self.A.shape[0]

    def split(self, x):
        """Per-space coefficient blocks of a global vector."""
        return tuple(x[o:o + s.n_dofs] for o, s in zip(self.offsets, self.spaces))

    def dump(self, path):
        """Coordinate text format ``i j value``, 0-based."""
        coo = self.A.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w") as fh:
            for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")


# --- low-level helpers ------------------------------------------------------

_CHUNK = 4_000_000


def _accumulate(keys, n, w, A, B):
    """Per-key sum over points of ``w * A_p^T B_p``; returns (n, a, b)."""
    out = np.zeros((n, A.shape[1], B.shape[1]))
    step = max(1, _CHUNK // (A.shape[1] * B.shape[1]))
    for s in range(0, len(w), step):
        sl = slice(s, s + step)
        np.add.at(out, keys[sl], np.einsum("p,pi,pj->pij", w[sl], A[sl], B[sl]))
    return out


def _accumulate_vec(keys, n, w, A):
    out = np.zeros((n, A.shape[1]))
    np.add.at(out, keys, w[:, None] * A)
    return out


class _Triplets:
    """Block COO collector; duplicates are summed on finalize."""

    def __init__(self, n):
        self.n = n
        self.rows, self.cols, self.vals = [], [], []

    def add(self, dofs_r, dofs_c, blocks):
        if len(blocks) == 0:
            return
        a, b = blocks.shape[1:]
        self.rows.append(np.repeat(dofs_r, b, axis=1).ravel())
        self.cols.append(np.tile(dofs_c, (1, a)).ravel())
        self.vals.append(blocks.ravel())

    def add_sym(self, dofs, blocks):
        self.add(dofs, dofs, blocks)

    def tocsr(self):
        if not self.rows:
            return sp.csr_matrix((self.n, self.n))
        r = np.concatenate(self.rows)
        c = np.concatenate(self.cols)
        v = np.concatenate(self.vals)
        A = sp.coo_matrix((v, (r, c)), shape=(self.n, self.n)).tocsr()
        A.sum_duplicates()
        return A


def symmetrize(A):
    """Exactly symmetric copy ``(A + A^T) / 2`` without stored zeros."""
    S = ((A + A.T) * 0.5).tocsr()
    S.eliminate_zeros()
    S.sort_indices()
    return S


def _unique_keys(owner):
    ids, inv = np.unique(owner, return_inverse=True)
    return ids, inv.ravel()


# --- element / face / boundary terms ---------------------------------------

def _volume_terms(T, space, rule, offset, kappa=1.0, f=None, b=None):
    if len(rule) == 0:
        return
    ids, keys = _unique_keys(rule.owner)
    grad = space.eval_grad(rule.owner, rule.points)
    nb, d = space.n_local, space.dim
    blocks = np.zeros((len(ids), nb, nb))
    for a in range(d):
        ga = grad[..., a]
        blocks += _accumulate(keys, len(ids), kappa * rule.weights, ga, ga)
    dofs = space.dofs(ids) + offset
    T.add_sym(dofs, blocks)
    if f is not None:
        vals = space.eval(rule.owner, rule.points)
        loads = _accumulate_vec(keys, len(ids), rule.weights * f(rule.points), vals)
        np.add.at(b, dofs, loads)


def _interior_face_terms(T, space, mesh, rule, offset, beta, h, kappa=1.0):
    """SIP consistency, symmetry and penalty terms on F ∩ Ω."""
    if len(rule) == 0:
        return
    faces, keys = _unique_keys(rule.owner)
    left = mesh.face_left[rule.owner]
    right = mesh.face_right[rule.owner]
    n = mesh.face_geometry(rule.owner)[0]
    vl, vr = space.eval(left, rule.points), space.eval(right, rule.points)
    dl = np.einsum("pbd,pd->pb", space.eval_grad(left, rule.points), n)
    dr = np.einsum("pbd,pd->pb", space.eval_grad(right, rule.points), n)
    jump = np.hstack([vl, -vr])
    avg = 0.5 * kappa * np.hstack([dl, dr])
    w = rule.weights
    cons = _accumulate(keys, len(faces), w, avg, jump)
    blocks = -cons - cons.transpose(0, 2, 1) + _accumulate(keys, len(faces),
                                                           (beta * kappa / h) * w, jump, jump)
    dofs = np.hstack([space.dofs(mesh.face_left[faces]), space.dofs(mesh.face_right[faces])])
    T.add_sym(dofs + offset, blocks)


def _nitsche_terms(T, space, rule, elements, normals, offset, beta, h, kappa=1.0,
                   g=None, b=None):
    """Weak Dirichlet terms on a boundary rule whose points belong to ``elements``."""
    if len(rule) == 0:
        return
    ids, keys = _unique_keys(elements)
    v = space.eval(elements, rule.points)
    dn = kappa * np.einsum("pbd,pd->pb", space.eval_grad(elements, rule.points), normals)
    w = rule.weights
    cons = _accumulate(keys, len(ids), w, dn, v)
    blocks = -cons - cons.transpose(0, 2, 1) + _accumulate(keys, len(ids),
                                                           (beta * kappa / h) * w, v, v)
    dofs = space.dofs(ids) + offset
    T.add_sym(dofs, blocks)
    if g is not None:
        gv = g(rule.points)
        loads = _accumulate_vec(keys, len(ids), w * gv, -dn + (beta * kappa / h) * v)
        np.add.at(b, dofs, loads)


def _boundary_face_rule_data(mesh, rule):
    elements = mesh.face_left[rule.owner]
    normals = mesh.face_geometry(rule.owner)[0]
    return elements, normals


# --- ghost penalties --------------------------------------------------------

def _face_jump_penalty(T, space, mesh, faces, params, h, offset, full_gradient=False):
    faces = np.asarray(faces, dtype=int)
    if len(faces) == 0:
        return
    k = space.order
    rule = full_face_rules(mesh, faces, max(2 * k, 1))
    _, keys = _unique_keys(rule.owner)
    left = mesh.face_left[rule.owner]
    right = mesh.face_right[rule.owner]
    n = mesh.face_geometry(rule.owner)[0]
    w = rule.weights
    nb = space.n_local
    blocks = np.zeros((len(faces), 2 * nb, 2 * nb))
    if full_gradient:
        gl = space.eval_grad(left, rule.points)
        gr = space.eval_grad(right, rule.points)
        for a in range(space.dim):
            J = np.hstack([gl[..., a], -gr[..., a]])
            blocks += _accumulate(keys, len(faces), params.gamma_j(1) * h * w, J, J)
    else:
        for j in range(k + 1):
            gam = params.gamma_j(j)
            if gam == 0:
                continue
            J = np.hstack([space.normal_derivative(left, rule.points, n, j),
                           -space.normal_derivative(right, rule.points, n, j)])
            blocks += _accumulate(keys, len(faces), gam * h ** (2 * j - 1) * w, J, J)
    dofs = np.hstack([space.dofs(mesh.face_left[faces]), space.dofs(mesh.face_right[faces])])
    T.add_sym(dofs + offset, blocks)


def _patch_projection_blocks(space, patches, h):
    """``I - B B^T`` per patch, B the element-basis/patch-basis inner products.

    ``patches`` is (n_patches, m) background element ids.
    """
    mesh = space.mesh
    npatch, m = patches.shape
    k, d, nb = space.order, space.dim, space.n_local
    order = max(2 * k, 1)
    flat = patches.ravel()
    pts, wts = _member_rule(mesh, flat, order)
    nq = pts.shape[1]
    pts = pts.reshape(npatch, m, nq, d)
    wts = wts.reshape(npatch, m, nq)
    phi = space.eval(np.repeat(flat, nq), pts.reshape(-1, d)).reshape(npatch, m, nq, nb)
    center = pts.reshape(npatch, -1, d).mean(axis=1)
    xi = (pts - center[:, None, None, :]) / h
    exps = exponents(d, k)
    mono = monomial_derivative(xi.reshape(-1, d), exps, (0,) * d).reshape(npatch, m, nq, -1)
    gram = np.einsum("pmq,pmqa,pmqb->pab", wts, mono, mono)
    chol = np.linalg.cholesky(gram)
    inner = np.einsum("pmq,pmqi,pmqa->pmia", wts, phi, mono).reshape(npatch, m * nb, -1)
    # B = inner @ L^{-T}
    B = np.linalg.solve(chol, inner.transpose(0, 2, 1)).transpose(0, 2, 1)
    eye = np.eye(m * nb)
    return eye[None] - np.einsum("pia,pja->pij", B, B)


def _member_rule(mesh, elements, order):
    """Full-element rule kept in the given element order, (n, nq, d) and (n, nq)."""
    ref = reference_rule(mesh.dim, order)
    verts = mesh.element_vertices(elements)
    edges = verts[:, 1:] - verts[:, :1]
    pts = verts[:, :1] + np.einsum("qk,nkd->nqd", ref.points, edges)
    vol = mesh.volumes()[elements] * factorial(mesh.dim)
    return pts, vol[:, None] * ref.weights[None, :]


def ghost_patches(variant, mesh, classification, physical_volume=None, c_s=0.1):
    """Patch lists (grouped by size) for the projection ghost penalties.

    ``physical_volume`` maps background elements to ``|T ∩ Ω|`` and is only
    needed for ``PROJECTION_P3``.
    """
    variant = GhostPenalty.parse(variant)
    cls = classification
    active = cls.active_mask
    if variant == GhostPenalty.PROJECTION_P1:
        f = cls.ghost_faces
        return [np.column_stack([mesh.face_left[f], mesh.face_right[f]])] if len(f) else []
    if variant == GhostPenalty.PROJECTION_P2:
        groups = {}
        for t in cls.cut_elements:
            patch = mesh.vertex_patch(t)
            patch = patch[active[patch]]
            # the cut element first, then its neighbours
            patch = np.concatenate([[t], patch[patch != t]])
            groups.setdefault(len(patch), []).append(patch)
        return [np.array(g) for _, g in sorted(groups.items())]
    if variant == GhostPenalty.PROJECTION_P3:
        if physical_volume is None:
            raise ValueError("physical volumes are required for agglomerated patches")
        diam = mesh.diameters()
        threshold = c_s * diam ** mesh.dim
        fat = active & (physical_volume >= threshold)
        pairs = []
        for t in cls.cut_elements:
            if physical_volume[t] > threshold[t]:
                continue
            nb = mesh.vertex_patch(t)
            nb = nb[(nb != t) & fat[nb]]
            if len(nb) == 0:
                raise RuntimeError(
                    f"element {t} has a small cut (|T ∩ Ω| = {physical_volume[t]:.3e}) and no "
                    "neighbour with a fat intersection; the geometry is under-resolved "
                    f"for c_s = {c_s}")
            # prefer the neighbour with the largest physical part, face neighbours first
            share = np.array([len(np.intersect1d(mesh.elements[t], mesh.elements[e]))
                              for e in nb])
            best = nb[np.lexsort((-physical_volume[nb], -share))[0]]
            pairs.append((t, best))
        return [np.array(pairs, dtype=int)] if pairs else []
    raise ValueError(f"{variant} is not a projection ghost penalty")


def assemble_ghost_penalty(variant, mesh, classification, space, params, h=None, offset=0,
                           physical_volume=None, n_total=None):
    """Ghost penalty matrix of the chosen variant (square, ``n_total`` wide)."""
    variant = GhostPenalty.parse(variant)
    h = penalty_length(mesh, params.penalty_length) if h is None else h
    n_total = space.n_dofs + offset if n_total is None else n_total
    T = _Triplets(n_total)
    _add_ghost_penalty(T, variant, mesh, classification, space, params, h, offset,
                       physical_volume)
    return symmetrize(T.tocsr())


def _add_ghost_penalty(T, variant, mesh, cls, space, params, h, offset, physical_volume):
    if variant == GhostPenalty.NONE:
        return
    if variant == GhostPenalty.FACE_JUMPS:
        _face_jump_penalty(T, space, mesh, cls.ghost_faces, params, h, offset)
        return
    if variant == GhostPenalty.FULL_GRADIENT:
        _face_jump_penalty(T, space, mesh, cls.ghost_faces, params, h, offset,
                           full_gradient=True)
        return
    for patches in ghost_patches(variant, mesh, cls, physical_volume, params.c_s):
        blocks = params.gamma_proj * h ** -2 * _patch_projection_blocks(space, patches, h)
        dofs = space.dofs(patches.ravel()).reshape(len(patches), -1)
        T.add_sym(dofs + offset, blocks)


def physical_volumes(mesh, rule):
    """``|T ∩ Ω|`` per background element from a volume rule."""
    return rule.measure_per_owner(mesh.n_elements)


def _warn_if_unstable(cls, volume_rule, variant, mesh):
    if variant != GhostPenalty.NONE:
        return
    vol = physical_volumes(mesh, volume_rule)
    empty = cls.cut_elements[vol[cls.cut_elements] <= 0]
    if len(empty):
        warnings.warn(f"{len(empty)} cut elements have no physical part and no ghost penalty; "
                      "the system is singular", SingularSystemWarning, stacklevel=3)


# --- boundary-value problem -------------------------------------------------

def assemble_bvp(mesh, classification, space, quadrature, params=None, f=None, g=None):
    """Stiffness matrix and load vector of the stabilized cut DG Poisson problem.

    Parameters
    ----------
    quadrature : DomainQuadrature
        Rules on the physical parts of ``classification``.
    f, g : callable
        Source and Dirichlet data, ``(n, dim)`` points -> values. Either may
        be omitted to assemble the matrix only (zero data).
    """
    params = BvpParams() if params is None else params
    h = penalty_length(mesh, params.penalty_length)
    n = space.n_dofs
    T = _Triplets(n)
    b = np.zeros(n)
    q = quadrature
    _warn_if_unstable(classification, q.volume, params.gp_variant, mesh)
    _volume_terms(T, space, q.volume, 0, 1.0, f, b if f is not None else None)
    _interior_face_terms(T, space, mesh, q.faces, 0, params.beta, h)
    _nitsche_terms(T, space, q.interface, q.interface.owner, q.interface.normals, 0,
                   params.beta, h, 1.0, g, b if g is not None else None)
    elems, normals = _boundary_face_rule_data(mesh, q.boundary)
    _nitsche_terms(T, space, q.boundary, elems, normals, 0, params.beta, h, 1.0, g,
                   b if g is not None else None)
    vol = physical_volumes(mesh, q.volume) if params.gp_variant == GhostPenalty.PROJECTION_P3 \
        else None
    _add_ghost_penalty(T, params.gp_variant, mesh, classification, space, params, h, 0, vol)
    return SystemOperator(symmetrize(T.tocsr()), b, (space,), (0,))


# --- interface problem ------------------------------------------------------

def interface_weights(params, vol1=None, vol2=None, gamma_measure=None, h=None):
    """Per-element (omega1, omega2, penalty) with penalty multiplying (.,.)_Γ.

    Harmonic weights are constant; the penalty is ``beta_Γ / h``. Cut-area
    weights use the element measures of the two sides and of Γ ∩ T.
    """
    if params.weighting == Weighting.HARMONIC:
        w1, w2 = params.omega
        return w1, w2, params.beta_gamma / h
    k1, k2 = params.kappa1, params.kappa2
    denom = k2 * vol1 + k1 * vol2
    denom = np.where(denom > 0, denom, 1.0)
    w1 = k2 * vol1 / denom
    w2 = k1 * vol2 / denom
    pen = params.beta_gamma_tilde * k1 * k2 * gamma_measure / denom
    return w1, w2, pen


def assemble_interface(mesh, classification, spaces, quadratures, params=None, f=None, g=None,
                       g_D=None, g_N=None):
    """Coupled two-subdomain system over ``V_1 x V_2`` (DOFs of V_1 first).

    Parameters
    ----------
    classification : TwoDomainClassification
    spaces : (BrokenSpace, BrokenSpace)
    quadratures : (DomainQuadrature, DomainQuadrature)
        Per-side rules; the interface rule of side 1 carries normals out of
        Ω₁ and is used for the coupling terms.
    f, g : sequences of two callables or None
        Per-side source and outer Dirichlet data.
    g_D, g_N : callable or None
        Solution jump ``u1 - u2`` (points) and flux jump ``κ1∂_n u1 - κ2∂_n u2``
        (points, normals) on Γ.
    """
    params = InterfaceParams() if params is None else params
    h = penalty_length(mesh, params.penalty_length)
    V1, V2 = spaces
    offsets = (0, V1.n_dofs)
    n = V1.n_dofs + V2.n_dofs
    T = _Triplets(n)
    b = np.zeros(n)
    kappas = (params.kappa1, params.kappa2)
    f = (None, None) if f is None else f
    g = (None, None) if g is None else g
    for i, (V, q, off, kap) in enumerate(zip(spaces, quadratures, offsets, kappas), start=1):
        cls = classification[i]
        side = params.side_params(i)
        fi, gi = f[i - 1], g[i - 1]
        _warn_if_unstable(cls, q.volume, side.gp_variant, mesh)
        _volume_terms(T, V, q.volume, off, kap, fi, b if fi is not None else None)
        _interior_face_terms(T, V, mesh, q.faces, off, params.beta_face, h, kap)
        elems, normals = _boundary_face_rule_data(mesh, q.boundary)
        _nitsche_terms(T, V, q.boundary, elems, normals, off, params.beta_face, h, kap, gi,
                       b if gi is not None else None)
        vol = physical_volumes(mesh, q.volume) if side.gp_variant == GhostPenalty.PROJECTION_P3 \
            else None
        _add_ghost_penalty(T, side.gp_variant, mesh, cls, V, side, h, off, vol)
    _coupling_terms(T, b, mesh, spaces, offsets, quadratures, params, h, g_D, g_N)
    return SystemOperator(symmetrize(T.tocsr()), b, tuple(spaces), offsets)


def _coupling_terms(T, b, mesh, spaces, offsets, quadratures, params, h, g_D, g_N):
    V1, V2 = spaces
    rule = quadratures[0].interface
    if len(rule) == 0:
        return
    ids, keys = _unique_keys(rule.owner)
    if params.weighting == Weighting.HARMONIC:
        w1, w2, pen = interface_weights(params, h=h)
        w1 = np.full(len(rule), w1)
        w2 = np.full(len(rule), w2)
        pen = np.full(len(rule), pen)
    else:
        vol1 = physical_volumes(mesh, quadratures[0].volume)[rule.owner]
        vol2 = physical_volumes(mesh, quadratures[1].volume)[rule.owner]
        gam = rule.measure_per_owner(mesh.n_elements)[rule.owner]
        w1, w2, pen = interface_weights(params, vol1, vol2, gam)
    k1, k2 = params.kappa1, params.kappa2
    nrm = rule.normals
    pts = rule.points
    v1 = V1.eval(rule.owner, pts)
    v2 = V2.eval(rule.owner, pts)
    d1 = np.einsum("pbd,pd->pb", V1.eval_grad(rule.owner, pts), nrm)
    d2 = np.einsum("pbd,pd->pb", V2.eval_grad(rule.owner, pts), nrm)
    jump = np.hstack([v1, -v2])
    flux = np.hstack([(w1 * k1)[:, None] * d1, (w2 * k2)[:, None] * d2])
    wts = rule.weights
    cons = _accumulate(keys, len(ids), wts, flux, jump)
    blocks = -cons - cons.transpose(0, 2, 1) + _accumulate(keys, len(ids), pen * wts, jump, jump)
    dofs = np.hstack([V1.dofs(ids) + offsets[0], V2.dofs(ids) + offsets[1]])
    T.add_sym(dofs, blocks)
    load = np.zeros((len(rule), jump.shape[1]))
    if g_D is not None:
        gd = g_D(pts)
        load += gd[:, None] * (-flux + pen[:, None] * jump)
    if g_N is not None:
        gn = g_N(pts, nrm)
        dual = np.hstack([w2[:, None] * v1, w1[:, None] * v2])
        load += gn[:, None] * dual
    if g_D is not None or g_N is not None:
        np.add.at(b, dofs, _accumulate_vec(keys, len(ids), wts, load))


# --- Gram matrices for the extension-property diagnostics -------------------

def gram_matrices(mesh, classification, space, quadrature):
    """Physical and full-element stiffness/mass matrices on the active mesh.

    Returns a dict with ``S_phys``, ``M_phys`` (integrals over T ∩ Ω) and
    ``S_full``, ``M_full`` (integrals over the full active elements).
    """
    n = space.n_dofs
    out = {}
    full = full_volume_rules(mesh, space.elements, max(2 * space.order, 1))
    for tag, rule in (("phys", quadrature.volume), ("full", full)):
        ids, keys = _unique_keys(rule.owner)
        vals = space.eval(rule.owner, rule.points)
        grads = space.eval_grad(rule.owner, rule.points)
        dofs = space.dofs(ids)
        Ts, Tm = _Triplets(n), _Triplets(n)
        sblocks = sum(_accumulate(keys, len(ids), rule.weights, grads[..., a], grads[..., a])
                      for a in range(space.dim))
        Ts.add_sym(dofs, sblocks)
        Tm.add_sym(dofs, _accumulate(keys, len(ids), rule.weights, vals, vals))
        out[f"S_{tag}"] = symmetrize(Ts.tocsr())
        out[f"M_{tag}"] = symmetrize(Tm.tocsr())
    return out


def dofs_per_element(dim, order):
    return comb(order + dim, dim)


def _pencil_max(N, D, rel_tol=1e-10):
    """Largest λ of N v = λ D v over the range of D (both dense, symmetric PSD)."""
    d, W = scipy.linalg.eigh(D)
    keep = d > rel_tol * d.max()
    W = W[:, keep] / np.sqrt(d[keep])
    return float(scipy.linalg.eigvalsh(W.T @ N @ W).max())


def extension_ratios(mesh, classification, space, quadrature, params, variant=None):
    """Dense spectral ratios behind the ghost penalty extension properties.

    ``ep1``: max vᵀS_T v / vᵀ(S_Ω + G)v (gradient extension),
    ``ep3``: max vᵀM_T v / vᵀ(M_Ω + G)v (L2 extension),
    ``ep4``: max vᵀG v / vᵀ(h⁻² M_T)v (weak consistency scaling).
    Intended for small meshes; all matrices are densified.
    """
    variant = GhostPenalty.parse(params.gp_variant if variant is None else variant)
    h = penalty_length(mesh, params.penalty_length)
    vol = physical_volumes(mesh, quadrature.volume)
    G = assemble_ghost_penalty(variant, mesh, classification, space, params, h=h,
                               physical_volume=vol).toarray()
    gm = {k: v.toarray() for k, v in gram_matrices(mesh, classification, space,
                                                   quadrature).items()}
    return {
        "ep1": _pencil_max(gm["S_full"], gm["S_phys"] + G),
        "ep3": _pencil_max(gm["M_full"], gm["M_phys"] + G),
        "ep4": _pencil_max(G, h ** -2 * gm["M_full"]) if np.any(G) else 0.0,
    }
