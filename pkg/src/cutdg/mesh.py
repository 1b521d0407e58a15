"""Structured simplicial background meshes with face topology."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import factorial

import numpy as np


@dataclass(frozen=True, eq=False)
class BackgroundMesh:
    """Structured simplicial mesh of an axis-aligned box.

    Faces are stored with sorted vertex indices; ``face_left`` is the
    lower-index element and ``face_right`` the higher one (``-1`` on the
    box boundary). Face normals point from left to right, or outward on
    the boundary.
    """

    dim: int
    box: np.ndarray  # (dim, 2) min/max per axis
    n_per_axis: int
    vertices: np.ndarray  # (n_vertices, dim)
    elements: np.ndarray  # (n_elements, dim + 1)
    faces: np.ndarray  # (n_faces, dim)
    face_left: np.ndarray
    face_right: np.ndarray
    element_to_faces: np.ndarray  # (n_elements, dim + 1), face opposite local vertex i
    h: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def cell_size(self):
        """Grid spacing per axis."""
        return (self.box[:, 1] - self.box[:, 0]) / self.n_per_axis

    @property
    def interior_faces(self):
        return np.flatnonzero(self.face_right >= 0)

    @property
    def boundary_faces(self):
        return np.flatnonzero(self.face_right < 0)

    def element_vertices(self, elements=None):
        """Vertex coordinates, shape (n, dim + 1, dim)."""
        idx = self.elements if elements is None else self.elements[elements]
        return self.vertices[idx]

    def face_vertices(self, faces=None):
        idx = self.faces if faces is None else self.faces[faces]
        return self.vertices[idx]

    def volumes(self):
        if "volumes" not in self._cache:
            self._cache["volumes"] = simplex_measure(self.element_vertices())
        return self._cache["volumes"]

    def centroids(self):
        return self.element_vertices().mean(axis=1)

    def diameters(self):
        v = self.element_vertices()
        d = 0.0
        for i, j in itertools.combinations(range(self.dim + 1), 2):
            d = np.maximum(d, np.linalg.norm(v[:, i] - v[:, j], axis=1))
        return d

    def face_geometry(self, faces=None):
        """Unit normals, measures and centroids of the given faces."""
        if "face_geometry" not in self._cache:
            self._cache["face_geometry"] = _face_geometry(self)
        normals, measures, centroids = self._cache["face_geometry"]
        if faces is None:
            return normals, measures, centroids
        return normals[faces], measures[faces], centroids[faces]

    def vertex_to_elements(self):
        """CSR-like (offsets, element ids) adjacency from vertices to elements."""
        if "v2e" not in self._cache:
            flat = self.elements.ravel()
            owner = np.repeat(np.arange(self.n_elements), self.dim + 1)
            order = np.argsort(flat, kind="stable")
            counts = np.bincount(flat, minlength=len(self.vertices))
            offsets = np.concatenate([[0], np.cumsum(counts)])
            self._cache["v2e"] = (offsets, owner[order])
        return self._cache["v2e"]

    def vertex_patch(self, element):
        """Elements sharing at least one vertex with ``element`` (sorted)."""
        offsets, ids = self.vertex_to_elements()
        found = [ids[offsets[v]:offsets[v + 1]] for v in self.elements[element]]
        return np.unique(np.concatenate(found))

    def locate(self, points):
        """Index of an element containing each point, ``-1`` outside the box."""
        points = np.asarray(points, dtype=float)
        lo = self.box[:, 0]
        size = self.cell_size
        n = self.n_per_axis
        rel = (points - lo) / size
        inside = np.all((rel >= -1e-12) & (rel <= n + 1e-12), axis=1)
        cell = np.clip(np.floor(rel).astype(int), 0, n - 1)
        frac = rel - cell
        n_sub = factorial(self.dim)
        cell_id = np.ravel_multi_index(tuple(cell[:, ::-1].T), (n,) * self.dim)
        _, sub_bary = _reference_subsimplices(self.dim)
        best = np.full(len(points), -1)
        best_val = np.full(len(points), -np.inf)
        for s, (t_inv, t0) in enumerate(sub_bary):
            lam = (frac - t0) @ t_inv.T
            lam = np.column_stack([1.0 - lam.sum(axis=1), lam])
            worst = lam.min(axis=1)
            better = worst > best_val
            best[better] = s
            best_val[better] = worst[better]
        out = cell_id * n_sub + best
        out[~inside] = -1
        return out

    def dump(self, path):
        """Write the plain-text mesh format."""
        with open(path, "w") as fh:
            fh.write(f"{self.dim} {len(self.vertices)} {self.n_elements} {self.n_faces}\n")
            for x in self.vertices:
                fh.write(" ".join(repr(float(c)) for c in x) + "\n")
            for e in self.elements:
                fh.write(" ".join(str(int(i)) for i in e) + "\n")
            for f, l, r in zip(self.faces, self.face_left, self.face_right):
                fh.write(" ".join(str(int(i)) for i in f) + f" {int(l)} {int(r)}\n")


def simplex_measure(verts):
    """Unsigned measure of k-simplices embedded in R^d; ``verts`` is (n, k+1, d)."""
    verts = np.asarray(verts, dtype=float)
    k = verts.shape[1] - 1
    if k == 0:
        return np.ones(len(verts))
    edges = verts[:, 1:] - verts[:, :1]
    if edges.shape[1] == edges.shape[2]:
        return np.abs(np.linalg.det(edges)) / factorial(k)
    gram = np.einsum("nid,njd->nij", edges, edges)
    return np.sqrt(np.maximum(np.linalg.det(gram), 0.0)) / factorial(k)


def signed_volume(verts):
    edges = verts[:, 1:] - verts[:, :1]
    return np.linalg.det(edges) / factorial(verts.shape[1] - 1)


def _reference_subsimplices(dim):
    """Unit-cube subdivision: vertex offsets per sub-simplex and inverse maps."""
    if dim == 2:
        subs = [((0, 0), (1, 0), (1, 1)), ((0, 0), (1, 1), (0, 1))]
    else:
        subs = []
        for perm in itertools.permutations(range(3)):
            path = [np.zeros(3, dtype=int)]
            for ax in perm:
                nxt = path[-1].copy()
                nxt[ax] = 1
                path.append(nxt)
            pts = [tuple(p) for p in path]
            # odd permutations come out negatively oriented
            e = np.array(pts[1:]) - np.array(pts[0])
            if np.linalg.det(e) < 0:
                pts[1], pts[2] = pts[2], pts[1]
            subs.append(tuple(pts))
    bary = []
    for s in subs:
        s = np.array(s, dtype=float)
        t = (s[1:] - s[0]).T
        bary.append((np.linalg.inv(t), s[0]))
    return subs, bary


def build_structured_mesh(box, n_per_axis, dim=None):
    """Split a uniform grid of ``box`` into congruent simplices.

    2D cells are cut along the (0,0)-(1,1) diagonal; 3D cells use the
    six-tetrahedron Kuhn subdivision around the main diagonal.

    Parameters
    ----------
    box : array_like, shape (dim, 2)
        Per-axis ``(min, max)``.
    n_per_axis : int
        Number of grid intervals per axis.
    dim : int, optional
        Must agree with ``box`` when given.
    """
    box = np.asarray(box, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2:
        raise ValueError("box must have shape (dim, 2)")
    if dim is None:
        dim = box.shape[0]
    if dim not in (2, 3) or box.shape[0] != dim:
        raise ValueError(f"unsupported dimension {dim} for box of shape {box.shape}")
    if int(n_per_axis) != n_per_axis or n_per_axis < 1:
        raise ValueError("n_per_axis must be a positive integer")
    n = int(n_per_axis)
    if np.any(box[:, 1] - box[:, 0] <= 0):
        raise ValueError("box must have positive extent on every axis")

    # lexicographic vertex order, x fastest
    axes = [np.linspace(box[a, 0], box[a, 1], n + 1) for a in range(dim)]
    grids = np.meshgrid(*axes[::-1], indexing="ij")
    vertices = np.column_stack([g.ravel() for g in grids[::-1]])

    subs, _ = _reference_subsimplices(dim)
    cells = np.stack(np.meshgrid(*([np.arange(n)] * dim)[::-1], indexing="ij"), -1)
    cells = cells.reshape(-1, dim)[:, ::-1]  # (n_cells, dim) with x fastest
    stride = (n + 1) ** np.arange(dim)
    base = cells @ stride
    elements = np.empty((len(cells), len(subs), dim + 1), dtype=np.int64)
    for s, sub in enumerate(subs):
        for i, off in enumerate(sub):
            elements[:, s, i] = base + np.dot(off, stride)
    elements = elements.reshape(-1, dim + 1)

    faces, left, right, e2f = _build_faces(elements, dim)
    verts = vertices[elements]
    h = 0.0
    for i, j in itertools.combinations(range(dim + 1), 2):
        h = max(h, float(np.max(np.linalg.norm(verts[:, i] - verts[:, j], axis=1))))
    return BackgroundMesh(dim=dim, box=box, n_per_axis=n, vertices=vertices,
                          elements=elements, faces=faces, face_left=left,
                          face_right=right, element_to_faces=e2f, h=h)


def _build_faces(elements, dim):
    n_el = len(elements)
    local = [tuple(j for j in range(dim + 1) if j != i) for i in range(dim + 1)]
    facets = np.sort(elements[:, local], axis=2)  # (n_el, dim+1, dim)
    flat = facets.reshape(-1, dim)
    owner = np.repeat(np.arange(n_el), dim + 1)
    uniq, inverse, counts = np.unique(flat, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        raise RuntimeError("non-manifold facet encountered")
    order = np.argsort(inverse, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    left = owner[order[starts]]
    right = np.where(counts == 2, owner[order[np.minimum(starts + 1, len(order) - 1)]], -1)
    e2f = inverse.reshape(n_el, dim + 1)
    return uniq, left, right, e2f


def _face_geometry(mesh):
    dim = mesh.dim
    fv = mesh.face_vertices()
    centroids = fv.mean(axis=1)
    measures = simplex_measure(fv)
    if dim == 2:
        t = fv[:, 1] - fv[:, 0]
        normals = np.column_stack([t[:, 1], -t[:, 0]])
    else:
        normals = np.cross(fv[:, 1] - fv[:, 0], fv[:, 2] - fv[:, 0])
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    # orient away from the left element
    left_centroid = mesh.element_vertices(mesh.face_left).mean(axis=1)
    flip = np.einsum("nd,nd->n", normals, centroids - left_centroid) < 0
    normals[flip] *= -1
    return normals, measures, centroids


def face_geometry(mesh, face_index):
    """Unit normal (left to right / outward), measure and centroid of one face."""
    if not 0 <= face_index < mesh.n_faces:
        raise IndexError(f"face index {face_index} out of range")
    n, m, c = mesh.face_geometry()
    return n[face_index].copy(), float(m[face_index]), c[face_index].copy()


def load_mesh_dump(path):
    """Read back the header and arrays of :meth:`BackgroundMesh.dump`."""
    with open(path) as fh:
        dim, nv, ne, nf = (int(t) for t in fh.readline().split())
        rows = [fh.readline().split() for _ in range(nv + ne + nf)]
    vertices = np.array(rows[:nv], dtype=float)
    elements = np.array(rows[nv:nv + ne], dtype=np.int64)
    face_rows = np.array(rows[nv + ne:], dtype=np.int64)
    return dim, vertices, elements, face_rows
