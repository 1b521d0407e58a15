import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutdg.mesh import (build_structured_mesh, face_geometry, load_mesh_dump, signed_volume,
                        simplex_measure)

UNIT2 = [[0.0, 1.0], [0.0, 1.0]]
UNIT3 = [[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]]


def brute_force_faces(elements):
    """Pair element facets by sorted vertex tuples."""
    seen = {}
    for e, verts in enumerate(elements):
        for facet in itertools.combinations(sorted(verts), len(verts) - 1):
            seen.setdefault(facet, []).append(e)
    return seen


def test_single_square_split():
    m = build_structured_mesh(UNIT2, 1)
    assert (m.n_elements, len(m.vertices), m.n_faces) == (2, 4, 5)
    assert len(m.interior_faces) == 1
    assert len(m.boundary_faces) == 4


def test_single_cube_kuhn():
    m = build_structured_mesh(UNIT3, 1)
    assert m.n_elements == 6
    assert len(m.vertices) == 8
    assert np.isclose(m.volumes().sum(), 1.0, rtol=0, atol=1e-15)


def test_faces_match_brute_force_pairing():
    m = build_structured_mesh(UNIT2, 4)
    oracle = brute_force_faces(m.elements)
    assert m.n_faces == len(oracle)
    interior = {k for k, v in oracle.items() if len(v) == 2}
    assert len(m.interior_faces) == len(interior)
    for f in range(m.n_faces):
        key = tuple(int(i) for i in m.faces[f])
        owners = sorted(oracle[key])
        assert m.face_left[f] == owners[0]
        assert m.face_right[f] == (owners[1] if len(owners) == 2 else -1)


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_partition_of_box(dim, n):
    box = np.array([[-1.1, 0.7], [0.2, 1.0], [-0.3, 0.3]][:dim])
    m = build_structured_mesh(box, n)
    expected = np.prod(box[:, 1] - box[:, 0])
    assert abs(m.volumes().sum() - expected) <= 1e-12 * expected


@pytest.mark.parametrize("dim", [2, 3])
def test_positive_orientation_and_conformity(dim):
    m = build_structured_mesh(UNIT3[:dim], 3)
    assert np.all(signed_volume(m.element_vertices()) > 0)
    for f in m.interior_faces[:200]:
        face = set(m.faces[f].tolist())
        assert face <= set(m.elements[m.face_left[f]].tolist())
        assert face <= set(m.elements[m.face_right[f]].tolist())


@pytest.mark.parametrize("dim", [2, 3])
def test_h_is_spacing_times_sqrt_dim(dim):
    box = np.array([[0.0, 2.0]] * dim)
    m = build_structured_mesh(box, 4)
    assert np.isclose(m.h, 0.5 * np.sqrt(dim))
    assert np.allclose(m.diameters(), m.h)
    assert np.allclose(m.cell_size, 0.5)


def test_deterministic():
    a = build_structured_mesh(UNIT3, 3)
    b = build_structured_mesh(UNIT3, 3)
    for name in ("vertices", "elements", "faces", "face_left", "face_right"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_axis_aligned_face_normal_is_coordinate_vector():
    m = build_structured_mesh(UNIT2, 2)
    n, meas, c = face_geometry(m, int(m.boundary_faces[0]))
    assert meas > 0
    assert np.isclose(np.abs(n).max(), 1.0) and np.isclose(np.abs(n).min(), 0.0)


@pytest.mark.parametrize("dim", [2, 3])
def test_normals_point_left_to_right_and_outward(dim):
    m = build_structured_mesh(UNIT3[:dim], 3)
    normals, _, centroids = m.face_geometry()
    cl = m.centroids()[m.face_left]
    assert np.all(np.einsum("nd,nd->n", normals, centroids - cl) > 0)
    inner = m.interior_faces
    cr = m.centroids()[m.face_right[inner]]
    assert np.all(np.einsum("nd,nd->n", normals[inner], cr - centroids[inner]) > 0)
    assert np.all(m.face_left[inner] < m.face_right[inner])


@pytest.mark.parametrize("dim", [2, 3])
def test_weighted_outward_normals_sum_to_zero(dim):
    m = build_structured_mesh(UNIT3[:dim], 2)
    normals, measures, _ = m.face_geometry()
    total = np.zeros((m.n_elements, dim))
    for e in range(m.n_elements):
        for f in m.element_to_faces[e]:
            sign = 1.0 if m.face_left[f] == e else -1.0
            total[e] += sign * measures[f] * normals[f]
    assert np.abs(total).max() < 1e-12


def test_face_geometry_index_check():
    m = build_structured_mesh(UNIT2, 1)
    with pytest.raises(IndexError):
        face_geometry(m, 5)


@pytest.mark.parametrize("n", [0, -1, 1.5])
def test_rejects_bad_resolution(n):
    with pytest.raises(ValueError):
        build_structured_mesh(UNIT2, n)


def test_rejects_degenerate_box():
    with pytest.raises(ValueError):
        build_structured_mesh([[0.0, 0.0], [0.0, 1.0]], 2)


def test_dump_round_trip(tmp_path):
    m = build_structured_mesh(UNIT2, 2)
    path = tmp_path / "mesh.txt"
    m.dump(path)
    header = path.read_text().splitlines()[0].split()
    assert [int(t) for t in header] == [2, len(m.vertices), m.n_elements, m.n_faces]
    dim, verts, elems, faces = load_mesh_dump(path)
    assert dim == 2
    assert np.array_equal(verts, m.vertices)
    assert np.array_equal(elems, m.elements)
    assert np.array_equal(faces[:, :2], m.faces)
    assert np.array_equal(faces[:, 2], m.face_left)
    assert np.array_equal(faces[:, 3], m.face_right)


def test_simplex_measure_embedded():
    tri = np.array([[[0, 0, 0], [1, 0, 0], [0, 1, 0]]], dtype=float)
    assert np.isclose(simplex_measure(tri)[0], 0.5)


@settings(max_examples=30, deadline=None)
@given(dim=st.sampled_from([2, 3]), n=st.integers(1, 4),
       frac=st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3))
def test_locate_returns_containing_element(dim, n, frac):
    m = build_structured_mesh(UNIT3[:dim], n)
    x = np.array(frac[:dim])[None]
    e = m.locate(x)[0]
    verts = m.element_vertices([e])[0]
    T = (verts[1:] - verts[0]).T
    lam = np.linalg.solve(T, x[0] - verts[0])
    bary = np.concatenate([[1 - lam.sum()], lam])
    assert bary.min() > -1e-9


def test_locate_outside_box():
    m = build_structured_mesh(UNIT2, 2)
    assert m.locate(np.array([[1.5, 0.5]]))[0] == -1
