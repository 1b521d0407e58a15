"""Quadrature on reference simplices, cut elements, cut faces and interfaces.

Cut regions are approximated by recursive longest-edge bisection of the
mixed-sign sub-simplices followed by a piecewise-linear (marching simplex)
reconstruction of the zero level set on each leaf.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi

from .geometry import Tag, perturbed_values
from .mesh import simplex_measure

MAX_ORDER = 12
SLIVER_TOL = 1e-14
ROOT_ITERS = 4


@dataclass
class QuadratureRule:
    """Points/weights, optionally per-point normals and owning entity ids.

    Batched rules are sorted by ``owner``.
    """

    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray | None = None
    owner: np.ndarray | None = None

    def __len__(self):
        return len(self.weights)

    @property
    def measure(self):
        return float(np.sum(self.weights))

    def measure_per_owner(self, n):
        return np.bincount(self.owner, weights=self.weights, minlength=n)

    def subset(self, mask):
        return QuadratureRule(self.points[mask], self.weights[mask],
                              None if self.normals is None else self.normals[mask],
                              None if self.owner is None else self.owner[mask])

    @staticmethod
    def concatenate(rules):
        rules = [r for r in rules if r is not None]
        with_normals = all(r.normals is not None for r in rules)
        pts = np.concatenate([r.points for r in rules])
        w = np.concatenate([r.weights for r in rules])
        own = np.concatenate([r.owner for r in rules])
        nrm = np.concatenate([r.normals for r in rules]) if with_normals else None
        order = np.argsort(own, kind="stable")
        return QuadratureRule(pts[order], w[order],
                              None if nrm is None else nrm[order], own[order])


def _gauss_jacobi01(m, alpha):
    x, w = roots_jacobi(m, alpha, 0.0)
    return (x + 1) / 2, w / 2 ** (alpha + 1)


@lru_cache(maxsize=None)
def _reference(dim, order):
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"quadrature order must be in [1, {MAX_ORDER}], got {order}")
    if dim not in (1, 2, 3):
        raise ValueError(f"unsupported reference dimension {dim}")
    m = order // 2 + 1
    # collapsed (Stroud conical product) rule, exact to degree 2m - 1
    nodes = [_gauss_jacobi01(m, float(dim - 1 - a)) for a in range(dim)]
    grids = np.meshgrid(*[n[0] for n in nodes], indexing="ij")
    wgrid = np.meshgrid(*[n[1] for n in nodes], indexing="ij")
    t = np.column_stack([g.ravel() for g in grids])
    w = np.prod(np.column_stack([g.ravel() for g in wgrid]), axis=1)
    pts = np.empty_like(t)
    rest = np.ones(len(t))
    for a in range(dim):
        pts[:, a] = rest * t[:, a]
        rest = rest * (1 - t[:, a])
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


def reference_rule(dim, order):
    """Positive-weight rule on the unit reference simplex, exact to ``order``."""
    pts, w = _reference(dim, int(order))
    return QuadratureRule(pts.copy(), w.copy())


def map_rule(simplices, order, owner=None):
    """Map the reference rule of matching dimension onto each simplex.

    ``simplices`` is ``(n, k+1, d)``; returns a rule sorted by owner.
    """
    simplices = np.asarray(simplices, dtype=float)
    n, kp1, d = simplices.shape
    k = kp1 - 1
    if owner is None:
        owner = np.arange(n)
    if n == 0:
        return QuadratureRule(np.zeros((0, d)), np.zeros(0), owner=np.zeros(0, dtype=int))
    if k == 0:
        return QuadratureRule(simplices[:, 0].copy(), np.ones(n), owner=np.asarray(owner))
    ref, w = _reference(k, int(order))
    edges = simplices[:, 1:] - simplices[:, :1]
    pts = simplices[:, :1] + np.einsum("qk,nkd->nqd", ref, edges)
    scale = simplex_measure(simplices) * factorial(k)
    weights = scale[:, None] * w[None, :]
    own = np.repeat(np.asarray(owner), len(w))
    rule = QuadratureRule(pts.reshape(-1, d), weights.ravel(), owner=own)
    order_idx = np.argsort(own, kind="stable")
    return rule.subset(order_idx)


# --- marching templates ---------------------------------------------------
# vertices sorted so the negative ones come first; an int is a vertex, a pair
# (i, j) is the zero of the linear interpolant on edge i-j.
_PRISM = lambda a, b: [  # noqa: E731
    [a[0], a[1], a[2], b[2]], [a[0], a[1], b[1], b[2]], [a[0], b[0], b[1], b[2]]]

_TEMPLATES = {
    (1, 1): ([[0, (0, 1)]], [[(0, 1)]]),
    (2, 1): ([[0, (0, 1), (0, 2)]], [[(0, 1), (0, 2)]]),
    (2, 2): ([[0, 1, (1, 2)], [0, (1, 2), (0, 2)]], [[(0, 2), (1, 2)]]),
    (3, 1): ([[0, (0, 1), (0, 2), (0, 3)]], [[(0, 1), (0, 2), (0, 3)]]),
    (3, 2): (_PRISM([0, (0, 2), (0, 3)], [1, (1, 2), (1, 3)]),
             [[(0, 2), (1, 2), (1, 3)], [(0, 2), (1, 3), (0, 3)]]),
    (3, 3): (_PRISM([0, 1, 2], [(0, 3), (1, 3), (2, 3)]), [[(0, 3), (1, 3), (2, 3)]]),
}


def _edge_roots(va, vb, fa, fb, values, iters):
    """Zero of ``values`` on segments va-vb by Illinois regula falsi.

    The update is invariant under ``f -> -f``, so both sides of a cut see
    bit-identical points.
    """
    ta = np.zeros(len(fa))
    tb = np.ones(len(fa))
    t = fa / (fa - fb)
    if iters == 0:
        return va + t[:, None] * (vb - va)
    fa, fb = fa.copy(), fb.copy()
    side = np.zeros(len(fa), dtype=int)
    for _ in range(iters):
        ft = values(va + t[:, None] * (vb - va))
        same_a = np.sign(ft) == np.sign(fa)
        done = ft == 0
        # replace the endpoint with the same sign; halve the stale one
        ta = np.where(same_a & ~done, t, ta)
        fa_new = np.where(same_a & ~done, ft, fa)
        tb = np.where(~same_a & ~done, t, tb)
        fb_new = np.where(~same_a & ~done, ft, fb)
        fb_new = np.where(same_a & (side == 1), 0.5 * fb_new, fb_new)
        fa_new = np.where(~same_a & (side == -1), 0.5 * fa_new, fa_new)
        side = np.where(same_a, 1, -1)
        fa, fb = fa_new, fb_new
        t_next = (ta * fb - tb * fa) / (fb - fa)
        t = np.where(done | (fb == fa), t, t_next)
    return va + t[:, None] * (vb - va)


def _facet_normals(facets, leaf_verts, leaf_vals):
    """Unit normals of interface facets, oriented out of the negative side."""
    d = facets.shape[2]
    if d == 2:
        t = facets[:, 1] - facets[:, 0]
        nrm = np.column_stack([t[:, 1], -t[:, 0]])
    else:
        nrm = np.cross(facets[:, 1] - facets[:, 0], facets[:, 2] - facets[:, 0])
    nrm /= np.maximum(np.linalg.norm(nrm, axis=1), 1e-300)[:, None]
    # gradient of the linear interpolant fixes the orientation
    e = leaf_verts[:, 1:] - leaf_verts[:, :1]
    df = leaf_vals[:, 1:] - leaf_vals[:, :1]
    grad = np.linalg.solve(e, df[..., None])[..., 0]
    flip = np.einsum("nd,nd->n", nrm, grad) < 0
    nrm[flip] *= -1
    return nrm


def _march(verts, vals, values, root_iters):
    """Split mixed-sign simplices along the reconstructed zero set.

    Returns negative-side pieces with parents and, for full-dimensional
    simplices, the interface facets with parents and normals.
    """
    n, kp1, d = verts.shape
    k = kp1 - 1
    order = np.argsort(vals >= 0, axis=1, kind="stable")
    n_neg = np.sum(vals < 0, axis=1)
    pieces, piece_parent, facets, facet_parent, normals = [], [], [], [], []
    rows_all = np.arange(n)
    for kn in range(1, kp1):
        rows = rows_all[n_neg == kn]
        if len(rows) == 0:
            continue
        V, F, O = verts[rows], vals[rows], order[rows]
        r = np.arange(len(rows))
        cache = {}

        def point(tok):
            if not isinstance(tok, tuple):
                return V[r, O[:, tok]]
            if tok not in cache:
                a, b = O[:, tok[0]], O[:, tok[1]]
                lo, hi = np.minimum(a, b), np.maximum(a, b)
                cache[tok] = _edge_roots(V[r, lo], V[r, hi], F[r, lo], F[r, hi],
                                         values, root_iters)
            return cache[tok]

        vol_t, face_t = _TEMPLATES[(k, kn)]
        for simp in vol_t:
            pieces.append(np.stack([point(t) for t in simp], axis=1))
            piece_parent.append(rows)
        if k == d:
            for simp in face_t:
                fc = np.stack([point(t) for t in simp], axis=1)
                facets.append(fc)
                facet_parent.append(rows)
                normals.append(_facet_normals(fc, V, F))
    return pieces, piece_parent, facets, facet_parent, normals


def _bisect(verts):
    n, kp1, _ = verts.shape
    pairs = [(i, j) for i in range(kp1) for j in range(i + 1, kp1)]
    lengths = np.stack([np.linalg.norm(verts[:, i] - verts[:, j], axis=1) for i, j in pairs], 1)
    # ties broken by lowest pair index: deterministic
    best = np.argmax(lengths, axis=1)
    ii = np.array([p[0] for p in pairs])[best]
    jj = np.array([p[1] for p in pairs])[best]
    rows = np.arange(n)
    mid = 0.5 * (verts[rows, ii] + verts[rows, jj])
    a = verts.copy()
    b = verts.copy()
    a[rows, jj] = mid
    b[rows, ii] = mid
    return np.concatenate([a, b]), np.concatenate([rows, rows])


def clip_simplices(simplices, values, depth, root_iters=4, root_values=None):
    """Partition simplices by the sign of ``values``.

    Parameters
    ----------
    simplices : (n, k+1, d) array
    values : callable
        ``(m, d)`` points -> signed values; negative is the selected side.
    depth : int
        Refinement levels; each level applies ``k`` successive longest-edge
        bisections to the mixed-sign sub-simplices, which halves their
        diameter.
    root_iters : int
        Regula falsi steps locating the zero on each cut edge; 0 gives the
        plain linear interpolation of the vertex values.
    root_values : callable, optional
        Field refined by the root iteration; defaults to ``values``. Pass the
        unperturbed level set so the vertex tie-break does not move roots.

    Returns
    -------
    dict with ``inside``/``outside`` sub-simplex arrays and their parent
    indices; for ``k == d`` also ``interface`` facets, parents and unit
    ``interface_normal`` pointing from the negative to the positive side.
    """
    simplices = np.asarray(simplices, dtype=float)
    n, kp1, d = simplices.shape
    root_values = values if root_values is None else root_values
    neg_roots = lambda x: -root_values(x)  # noqa: E731
    out = {key: [] for key in ("inside", "inside_parent", "outside", "outside_parent",
                               "interface", "interface_parent", "interface_normal")}
    cur, cur_parent = simplices, np.arange(n)
    n_bisect = depth * max(kp1 - 1, 1)
    for level in range(n_bisect + 1):
        if len(cur) == 0:
            break
        vals = values(cur.reshape(-1, d)).reshape(len(cur), kp1)
        neg = vals < 0
        all_neg = neg.all(axis=1)
        all_pos = (~neg).all(axis=1)
        mixed = ~(all_neg | all_pos)
        out["inside"].append(cur[all_neg])
        out["inside_parent"].append(cur_parent[all_neg])
        out["outside"].append(cur[all_pos])
        out["outside_parent"].append(cur_parent[all_pos])
        cur, vals, cur_parent = cur[mixed], vals[mixed], cur_parent[mixed]
        if level < n_bisect:
            cur, idx = _bisect(cur)
            cur_parent = cur_parent[idx]
            continue
        p, pp, f, fp, fn = _march(cur, vals, root_values, root_iters)
        out["inside"] += p
        out["inside_parent"] += [cur_parent[r] for r in pp]
        out["interface"] += f
        out["interface_parent"] += [cur_parent[r] for r in fp]
        out["interface_normal"] += fn
        p, pp, _, _, _ = _march(cur, -vals, neg_roots, root_iters)
        out["outside"] += p
        out["outside_parent"] += [cur_parent[r] for r in pp]

    full = simplex_measure(simplices)
    result = {}
    for key, nverts in (("inside", kp1), ("outside", kp1), ("interface", kp1 - 1)):
        arrs = out[key]
        if arrs:
            s = np.concatenate(arrs)
            pr = np.concatenate(out[key + "_parent"])
        else:
            s = np.zeros((0, nverts, d))
            pr = np.zeros(0, dtype=int)
        keep = simplex_measure(s) >= SLIVER_TOL * full[pr] ** ((nverts - 1) / max(kp1 - 1, 1))
        result[key] = s[keep]
        result[key + "_parent"] = pr[keep]
        if key == "interface":
            nrm = np.concatenate(out["interface_normal"]) if arrs else np.zeros((0, d))
            result["interface_normal"] = nrm[keep]
    return result


def _side_values(phi, h, eps, side):
    sign = -1.0 if side == Tag.OUTSIDE else 1.0
    return lambda x: sign * perturbed_values(phi, x, h, eps)


def _side_roots(phi, side):
    sign = -1.0 if side == Tag.OUTSIDE else 1.0
    return lambda x: sign * phi(x)


def _empty(dim, normals=False):
    return QuadratureRule(np.zeros((0, dim)), np.zeros(0),
                          np.zeros((0, dim)) if normals else None, np.zeros(0, dtype=int))


def cut_volume_rules(mesh, elements, phi, side=Tag.INSIDE, depth=0, order=2, eps=1e-12,
                     with_interface=False, root_iters=ROOT_ITERS, normals="facet"):
    """Batched rules on ``T ∩ Ω`` for the given (cut) elements.

    Owners are the background element indices. With ``with_interface`` the
    matching rule on Γ is returned too, normals pointing out of ``side``.
    """
    elements = np.asarray(elements, dtype=int)
    if len(elements) == 0:
        vol = _empty(mesh.dim)
        return (vol, _empty(mesh.dim, True)) if with_interface else vol
    res = clip_simplices(mesh.element_vertices(elements),
                         _side_values(phi, mesh.h, eps, side), depth, root_iters,
                         _side_roots(phi, side))
    vol = map_rule(res["inside"], order, elements[res["inside_parent"]])
    if not with_interface:
        return vol
    return vol, _interface_from_facets(res, elements, phi, side, order, mesh.dim, normals)


def _interface_from_facets(res, elements, phi, side, order, dim, normals="facet"):
    facets = res["interface"]
    if not len(facets):
        return QuadratureRule(np.zeros((0, dim)), np.zeros(0), np.zeros((0, dim)),
                              np.zeros(0, dtype=int))
    owner = elements[res["interface_parent"]]
    ref, w = _reference(dim - 1, int(order))
    edges = facets[:, 1:] - facets[:, :1]
    pts = (facets[:, :1] + np.einsum("qk,nkd->nqd", ref, edges)).reshape(-1, dim)
    wts = (simplex_measure(facets) * factorial(dim - 1))[:, None] * w[None, :]
    own = np.repeat(owner, len(w))
    if normals == "levelset":
        nrm = phi.normal(pts)
        if side == Tag.OUTSIDE:
            nrm = -nrm
    elif normals == "facet":
        nrm = np.repeat(res["interface_normal"], len(w), axis=0)
    else:
        raise ValueError(f"unknown normal mode {normals!r}")
    idx = np.argsort(own, kind="stable")
    return QuadratureRule(pts[idx], wts.ravel()[idx], nrm[idx], own[idx])


def interface_rules(mesh, elements, phi, depth=0, order=2, eps=1e-12, side=Tag.INSIDE,
                    root_iters=ROOT_ITERS, normals="facet"):
    """Batched rules on Γ ∩ T with unit normals pointing out of ``side``."""
    return cut_volume_rules(mesh, elements, phi, side, depth, order, eps, True,
                            root_iters, normals)[1]


def full_volume_rules(mesh, elements, order):
    elements = np.asarray(elements, dtype=int)
    return map_rule(mesh.element_vertices(elements), order, elements)


def full_face_rules(mesh, faces, order):
    faces = np.asarray(faces, dtype=int)
    return map_rule(mesh.face_vertices(faces), order, faces)


def cut_face_rules(mesh, faces, phi, side=Tag.INSIDE, depth=0, order=2, eps=1e-12,
                   root_iters=ROOT_ITERS):
    """Batched rules on ``F ∩ Ω``; uncut faces get the mapped full rule."""
    faces = np.asarray(faces, dtype=int)
    values = _side_values(phi, mesh.h, eps, side)
    fv = mesh.face_vertices(faces)
    vals = values(fv.reshape(-1, mesh.dim)).reshape(len(faces), mesh.dim)
    neg = vals < 0
    full = neg.all(axis=1)
    mixed = neg.any(axis=1) & ~full
    rules = [map_rule(fv[full], order, faces[full])]
    if mixed.any():
        res = clip_simplices(fv[mixed], values, depth, root_iters, _side_roots(phi, side))
        rules.append(map_rule(res["inside"], order, faces[mixed][res["inside_parent"]]))
    return QuadratureRule.concatenate(rules)


def cut_volume_rule(mesh, element, phi, side=Tag.INSIDE, depth=0, order=2, eps=1e-12):
    """Rule on ``T ∩ Ω`` for a single element."""
    return cut_volume_rules(mesh, [element], phi, side, depth, order, eps)


def cut_face_rule(mesh, face, phi, side=Tag.INSIDE, depth=0, order=2, eps=1e-12):
    return cut_face_rules(mesh, [face], phi, side, depth, order, eps)


def interface_rule(mesh, element, phi, depth=0, order=2, eps=1e-12):
    return interface_rules(mesh, [element], phi, depth, order, eps)


@dataclass
class DomainQuadrature:
    """All rules needed to assemble on one physical (sub)domain."""

    volume: QuadratureRule  # physical parts of active elements
    faces: QuadratureRule  # F ∩ Ω on interior faces of the active mesh
    interface: QuadratureRule  # Γ with normals out of the domain
    boundary: QuadratureRule  # box boundary faces ∩ Ω
    depth: int
    order: int


def domain_quadrature(mesh, classification, depth, order, root_iters=ROOT_ITERS,
                      normals="facet"):
    """Every quadrature rule needed on one classified domain."""
    cls = classification
    phi, side, eps = cls.phi, cls.side, cls.eps
    vol_full = full_volume_rules(mesh, cls.inside_elements, order)
    vol_cut, iface = cut_volume_rules(mesh, cls.cut_elements, phi, side, depth, order, eps,
                                      True, root_iters, normals)
    volume = QuadratureRule.concatenate([vol_full, vol_cut])
    faces = cut_face_rules(mesh, cls.interior_faces, phi, side, depth, order, eps, root_iters)
    boundary = cut_face_rules(mesh, cls.boundary_faces_fitted, phi, side, depth, order, eps,
                              root_iters)
    return DomainQuadrature(volume, faces, iface, boundary, depth, order)
