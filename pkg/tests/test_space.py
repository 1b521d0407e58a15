import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutdg.geometry import circle2d, classify
from cutdg.mesh import build_structured_mesh
from cutdg.quadrature import full_volume_rules
from cutdg.space import BrokenSpace


def space(dim=2, n=3, order=2, box=None):
    box = [[-1.0, 1.0]] * dim if box is None else box
    m = build_structured_mesh(box, n)
    return BrokenSpace(m, np.arange(m.n_elements), order)


def interior_points(sp, per_element=3, seed=0):
    rng = np.random.default_rng(seed)
    verts = sp.mesh.element_vertices(sp.elements)
    lam = rng.dirichlet(np.ones(sp.dim + 1), (len(sp.elements), per_element))
    pts = np.einsum("epk,ekd->epd", lam, verts).reshape(-1, sp.dim)
    return np.repeat(sp.elements, per_element), pts


@pytest.mark.parametrize("dim,order", [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2)])
def test_mass_matrix_is_identity(dim, order):
    sp = space(dim, 2, order)
    blocks = sp.mass_matrix_full()
    assert np.abs(blocks - np.eye(sp.n_local)).max() < 1e-10


def test_mass_identity_on_cut_elements():
    m = build_structured_mesh([[-1, 1], [-1, 1]], 8)
    cls = classify(m, circle2d(0.6))
    sp = BrokenSpace(m, cls.active_elements, 3)
    assert np.abs(sp.mass_matrix_full() - np.eye(sp.n_local)).max() < 1e-10


def test_one_mode_reproduces_constants():
    sp = space(2, 3, 1)
    coef = sp.l2_project(lambda x: np.ones(len(x)))
    per_el = coef.reshape(len(sp.elements), sp.n_local)
    assert np.count_nonzero(np.abs(per_el) > 1e-12, axis=1).max() == 1
    el, pts = interior_points(sp)
    assert np.allclose(sp.field_values(coef, el, pts), 1.0, atol=1e-12)


def test_gradient_of_projected_x():
    sp = space(2, 3, 1)
    coef = sp.l2_project(lambda x: x[:, 0])
    el, pts = interior_points(sp)
    assert np.allclose(sp.field_gradients(coef, el, pts), [1.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("dim", [2, 3])
def test_polynomial_reproduction(dim):
    sp = space(dim, 2, 2)
    f = (lambda x: x[:, 0] * x[:, 1] + 0.3 * x[:, 0] ** 2 - x[:, 1] + 2)
    coef = sp.l2_project(f)
    el, pts = interior_points(sp)
    assert np.abs(sp.field_values(coef, el, pts) - f(pts)).max() < 1e-10


def test_gradient_matches_finite_differences():
    sp = space(2, 3, 2)
    coef = np.random.default_rng(1).normal(size=sp.n_dofs)
    el, pts = interior_points(sp, 2)
    g = sp.field_gradients(coef, el, pts)
    step = 1e-6
    for a in range(2):
        e = np.zeros(2)
        e[a] = step
        fd = (sp.field_values(coef, el, pts + e) - sp.field_values(coef, el, pts - e)) / (2 * step)
        assert np.allclose(g[:, a], fd, rtol=1e-6, atol=1e-6 * np.abs(g).max())


def test_second_normal_derivative_of_x_squared():
    sp = space(2, 2, 2)
    coef = sp.l2_project(lambda x: x[:, 0] ** 2)
    el, pts = interior_points(sp)
    vals = np.einsum("pb,pb->p", sp.normal_derivative(el, pts, [1.0, 0.0], 2),
                     coef[sp.dofs(el)])
    assert np.allclose(vals, 1.0)


def test_affine_has_no_second_derivative():
    sp = space(2, 2, 2)
    coef = sp.l2_project(lambda x: 3 * x[:, 0] - x[:, 1])
    el, pts = interior_points(sp)
    n = np.array([0.6, 0.8])
    vals = np.einsum("pb,pb->p", sp.normal_derivative(el, pts, n, 2), coef[sp.dofs(el)])
    assert np.abs(vals).max() < 1e-10


def test_rotated_first_derivative():
    sp = space(2, 2, 1)
    coef = sp.l2_project(lambda x: x[:, 0] + x[:, 1])
    el, pts = interior_points(sp)
    n = np.array([1.0, 1.0]) / np.sqrt(2)
    vals = np.einsum("pb,pb->p", sp.normal_derivative(el, pts, n, 1), coef[sp.dofs(el)])
    assert np.allclose(vals, np.sqrt(2))


def test_normal_derivative_zero_and_beyond_order():
    sp = space(2, 2, 1)
    el, pts = interior_points(sp)
    assert np.allclose(sp.normal_derivative(el, pts, [1.0, 0.0], 0), sp.eval(el, pts))
    assert np.all(sp.normal_derivative(el, pts, [1.0, 0.0], 2) == 0)


@settings(max_examples=20, deadline=None)
@given(j=st.integers(0, 3), angle=st.floats(0, 2 * np.pi), seed=st.integers(0, 100))
def test_jump_sign_rule(j, angle, seed):
    sp = space(2, 2, 3)
    m = sp.mesh
    f = int(m.interior_faces[seed % len(m.interior_faces)])
    l, r = m.face_left[f], m.face_right[f]
    x = m.face_vertices([f])[0].mean(axis=0)[None]
    n = np.array([np.cos(angle), np.sin(angle)])
    coef = np.random.default_rng(seed).normal(size=sp.n_dofs)

    def jump(nn, first, second):
        a = sp.normal_derivative([first], x, nn, j) @ coef[sp.dof_slice(first)]
        b = sp.normal_derivative([second], x, nn, j) @ coef[sp.dof_slice(second)]
        return (a - b)[0]
    assert np.isclose(jump(-n, r, l), (-1) ** (j + 1) * jump(n, l, r))


def test_projection_rate_for_sine():
    errs, hs = [], []
    for n in (4, 8, 16, 32):
        sp = space(2, n, 1)
        coef = sp.l2_project(lambda x: np.sin(x[:, 0]))
        rule = full_volume_rules(sp.mesh, sp.elements, 6)
        diff = sp.field_values(coef, rule.owner, rule.points) - np.sin(rule.points[:, 0])
        errs.append(np.sqrt(np.sum(rule.weights * diff ** 2)))
        hs.append(sp.mesh.h)
    rates = np.log(np.array(errs[:-1]) / errs[1:]) / np.log(np.array(hs[:-1]) / hs[1:])
    assert abs(rates[-1] - 2.0) <= 0.1


def test_congruence_classes_shared():
    sp = space(3, 3, 1)
    # the Kuhn split of a uniform grid has six tetrahedron shapes
    assert len(sp.class_coef) == 6


def test_inactive_element_raises():
    m = build_structured_mesh([[-1, 1], [-1, 1]], 2)
    sp = BrokenSpace(m, [0, 1], 1)
    with pytest.raises(KeyError):
        sp.dof_slice(3)
    with pytest.raises(KeyError):
        sp.eval([3], np.zeros((1, 2)))


def test_order_validation():
    m = build_structured_mesh([[0, 1], [0, 1]], 1)
    with pytest.raises(ValueError):
        BrokenSpace(m, [0], 4)
