import numpy as np
import pytest
import scipy.sparse as sp
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from cutdg.assembly import (BvpParams, GhostPenalty, InterfaceParams, SingularSystemWarning,
                            Weighting, assemble_bvp, assemble_ghost_penalty, extension_ratios,
                            interface_weights, penalty_length, physical_volumes)
from cutdg.geometry import LevelSet, circle2d, classify, half_plane
from cutdg.mesh import build_structured_mesh
from cutdg.problems import (InterfaceProblem, ManufacturedProblem, ScalarField, make_problem,
                            patch_polynomial)
from cutdg.quadrature import (DomainQuadrature, QuadratureRule, domain_quadrature,
                              full_face_rules, full_volume_rules)
from cutdg.space import BrokenSpace
from cutdg.study import assemble, discretize, solve_problem

VARIANTS = ["face_jumps", "full_gradient", "projection_p1", "projection_p2", "projection_p3",
            "none"]
BOX = np.array([[-1.0, 1.0], [-1.0, 1.0]])


def setup(phi, n=8, order=1, depth=1, quad=None, box=BOX):
    m = build_structured_mesh(box, n)
    cls = classify(m, phi)
    V = BrokenSpace(m, cls.active_elements, order)
    q = domain_quadrature(m, cls, depth, 2 * order if quad is None else quad)
    return m, cls, V, q


def empty_rule(dim, normals=False):
    return QuadratureRule(np.zeros((0, dim)), np.zeros(0),
                          np.zeros((0, dim)) if normals else None, np.zeros(0, dtype=int))


def block_pattern(A, V):
    coo = A.tocoo()
    el = V.elements
    return {(int(el[i]), int(el[j])) for i, j in
            zip(coo.row // V.n_local, coo.col // V.n_local)}


# --- structural properties --------------------------------------------------

@settings(max_examples=15, deadline=None)
@given(variant=st.sampled_from(VARIANTS[:-1] + ["none"]), r=st.floats(0.35, 0.7),
       cx=st.floats(-0.1, 0.1), order=st.integers(1, 2))
def test_matrix_exactly_symmetric(variant, r, cx, order):
    m, cls, V, q = setup(circle2d(r, [cx, 0.017]), 6, order)
    params = BvpParams(gp_variant=variant, gamma_proj=1.0)
    try:
        A = assemble_bvp(m, cls, V, q, params).A
    except RuntimeError:
        return  # agglomeration impossible on this geometry
    assert abs(A - A.T).max() == 0


@pytest.mark.parametrize("shift", np.linspace(0.0, 0.25, 6))
def test_spd_with_default_face_jumps(shift):
    m, cls, V, q = setup(circle2d(0.25).translate([shift * 0.1275] * 2), 8, 1,
                         box=np.array([[-0.51, 0.51]] * 2))
    A = assemble_bvp(m, cls, V, q, BvpParams()).A.toarray()
    assert np.linalg.eigvalsh(A).min() > 0


@pytest.mark.parametrize("variant", ["face_jumps", "full_gradient", "projection_p1"])
def test_fitted_dg_sparsity(variant):
    m, cls, V, q = setup(make_problem("flower2d").levelset, 10, 1, box=np.array([[-1.1, 1.1]] * 2))
    A = assemble_bvp(m, cls, V, q, BvpParams(gp_variant=variant)).A
    assert A.nnz == len(A.data) and np.all(A.data != 0)
    f = cls.interior_faces
    expected = {(int(e), int(e)) for e in V.elements}
    expected |= {(int(a), int(b)) for a, b in zip(m.face_left[f], m.face_right[f])}
    expected |= {(b, a) for a, b in expected}
    assert block_pattern(A, V) == expected


def test_vertex_patch_sparsity_is_wider():
    m, cls, V, q = setup(make_problem("flower2d").levelset, 10, 1, box=np.array([[-1.1, 1.1]] * 2))
    fj = block_pattern(assemble_bvp(m, cls, V, q, BvpParams()).A, V)
    p2 = block_pattern(assemble_bvp(m, cls, V, q, BvpParams(gp_variant="p2")).A, V)
    assert fj < p2


# --- ghost penalties --------------------------------------------------------

@pytest.mark.parametrize("variant", VARIANTS[:-1])
@pytest.mark.parametrize("order", [1, 2, 3])
def test_ghost_penalty_vanishes_on_polynomials(variant, order):
    m, cls, V, q = setup(circle2d(0.61, [0.01, 0.03]), 8, order)
    params = BvpParams(gp_variant=variant)
    vol = physical_volumes(m, q.volume)
    G = assemble_ghost_penalty(variant, m, cls, V, params, physical_volume=vol)
    expr = patch_polynomial(order)
    u = ScalarField(expr, 2)
    coef = V.l2_project(u)
    assert G.nnz > 0
    scale = abs(G).max() * coef @ coef
    assert abs(coef @ (G @ coef)) <= 1e-10 * scale


def test_two_triangle_jump_value():
    m = build_structured_mesh([[0.0, 1.0], [0.0, 1.0]], 1)
    cls = classify(m, half_plane([0.0, 1.0], 0.9))
    assert len(cls.ghost_faces) == 1
    V = BrokenSpace(m, cls.active_elements, 1)
    params = BvpParams(gamma=(50.0, 0.1))
    G = assemble_ghost_penalty("face_jumps", m, cls, V, params)
    v = V.l2_project(lambda x: x[:, 0])
    one = V.l2_project(lambda x: np.ones(len(x)))
    v[V.dof_slice(1)] += one[V.dof_slice(1)]
    h = penalty_length(m)
    assert h == 1.0
    assert np.isclose(v @ (G @ v), 50.0 / h * np.sqrt(2.0), rtol=1e-12)


def test_full_gradient_lacks_value_jump():
    m = build_structured_mesh([[0.0, 1.0], [0.0, 1.0]], 1)
    cls = classify(m, half_plane([0.0, 1.0], 0.9))
    V = BrokenSpace(m, cls.active_elements, 1)
    G = assemble_ghost_penalty("full_gradient", m, cls, V, BvpParams())
    v = np.zeros(V.n_dofs)
    v[V.dof_slice(1)] = V.l2_project(lambda x: np.ones(len(x)))[V.dof_slice(1)]
    assert abs(v @ (G @ v)) < 1e-12


def test_projection_p3_needs_fat_neighbour():
    # a tiny disc around a grid node: every cut element is small, no neighbour is fat
    m, cls, V, q = setup(circle2d(0.02, [0.0, 0.0]), 8, 1)
    assert len(cls.cut_elements) == 6
    with pytest.raises(RuntimeError):
        assemble_bvp(m, cls, V, q, BvpParams(gp_variant="projection_p3"))


def test_empty_space():
    m = build_structured_mesh(BOX, 2)
    V = BrokenSpace(m, [], 1)
    assert V.n_dofs == 0


def test_singular_warning_without_stabilization():
    m = build_structured_mesh([[0.0, 1.0], [0.0, 1.0]], 2)
    phi = half_plane([1.0, 0.0], 0.5 + 1e-10)
    cls = classify(m, phi)
    V = BrokenSpace(m, cls.active_elements, 1)
    q = domain_quadrature(m, cls, 0, 2)
    with pytest.warns(SingularSystemWarning):
        assemble_bvp(m, cls, V, q, BvpParams(gp_variant="none"))


def test_ghost_penalty_parse():
    assert GhostPenalty.parse("FaceJumps") == GhostPenalty.FACE_JUMPS
    assert GhostPenalty.parse("p3") == GhostPenalty.PROJECTION_P3
    with pytest.raises(ValueError):
        GhostPenalty.parse("bogus")


def test_param_validation():
    with pytest.raises(ValueError):
        BvpParams(beta=0.0)
    with pytest.raises(ValueError):
        BvpParams(gamma=(50.0, -1.0))
    with pytest.raises(ValueError):
        InterfaceParams(kappa1=-1.0)
    with pytest.raises(ValueError):
        BvpParams(penalty_length="cell")


# --- element matrix against a symbolic oracle ---------------------------------

def test_element_stiffness_matches_symbolic_integrals():
    m = build_structured_mesh([[0.0, 1.0], [0.0, 1.0]], 1)
    assert np.allclose(m.element_vertices([0])[0], [[0, 0], [1, 0], [1, 1]])
    cls = classify(m, LevelSet(lambda x: -np.ones(len(x)), dim=2))
    V = BrokenSpace(m, [0], 2)
    q = DomainQuadrature(full_volume_rules(m, [0], 4), empty_rule(2), empty_rule(2, True),
                         empty_rule(2), 0, 4)
    A = assemble_bvp(m, cls, V, q, BvpParams(gp_variant="none")).A.toarray()

    # rebuild each basis function as a polynomial from point values
    x, y = sympy.symbols("x y")
    monos = [x**a * y**b for a in range(3) for b in range(3 - a)]
    pts = np.array([[0.2, 0.1], [0.9, 0.1], [0.8, 0.7], [0.5, 0.3], [0.6, 0.15], [0.7, 0.5]])
    vander = np.array([[float(mono.subs({x: p[0], y: p[1]})) for mono in monos] for p in pts])
    coefs = np.linalg.solve(vander, V.eval(np.zeros(len(pts), dtype=int), pts))
    polys = [sum(float(c) * mono for c, mono in zip(coefs[:, i], monos)) for i in range(6)]

    def integral(expr):
        return float(sympy.integrate(sympy.integrate(expr, (y, 0, x)), (x, 0, 1)))

    oracle = np.array([[integral(sympy.diff(p, x) * sympy.diff(r, x)
                                 + sympy.diff(p, y) * sympy.diff(r, y)) for r in polys]
                       for p in polys])
    assert np.allclose(A, oracle, atol=1e-9 * np.abs(oracle).max())


# --- consistency ------------------------------------------------------------

@pytest.mark.parametrize("variant", VARIANTS[:-1])
@pytest.mark.parametrize("p", [1, 2, 3])
def test_polynomial_residual_vanishes(variant, p):
    problem = make_problem(f"patch_p{p}")
    disc = discretize(problem, 6, p, 0, 2 * p)
    params = BvpParams(gp_variant=variant)
    system = assemble(problem, disc, params)
    u_I = disc.spaces[0].l2_project(problem.u)
    res = system.A @ u_I - system.b
    assert np.linalg.norm(res) <= 1e-9 * np.linalg.norm(system.b)


def _consistency_oracle(problem, disc, params):
    """a_h(u, v) for the analytic u, written out term by term."""
    mesh, V = disc.mesh, disc.spaces[0]
    q = disc.quadratures[0]
    u = problem.u
    h = penalty_length(mesh, params.penalty_length)
    out = np.zeros(V.n_dofs)

    def add(owner, vals):
        np.add.at(out, V.dofs(owner), vals)

    r = q.volume
    add(r.owner, np.einsum("pbd,pd,p->pb", V.eval_grad(r.owner, r.points),
                           u.gradient(r.points), r.weights))
    r = q.faces
    n = mesh.face_geometry(r.owner)[0]
    flux = np.einsum("pd,pd->p", u.gradient(r.points), n) * r.weights
    add(mesh.face_left[r.owner], -flux[:, None] * V.eval(mesh.face_left[r.owner], r.points))
    add(mesh.face_right[r.owner], flux[:, None] * V.eval(mesh.face_right[r.owner], r.points))
    for r, el, nrm in ((q.interface, q.interface.owner, q.interface.normals),
                       (q.boundary, mesh.face_left[q.boundary.owner],
                        mesh.face_geometry(q.boundary.owner)[0])):
        v = V.eval(el, r.points)
        dn_v = np.einsum("pbd,pd->pb", V.eval_grad(el, r.points), nrm)
        dn_u = np.einsum("pd,pd->p", u.gradient(r.points), nrm)
        uu = u(r.points)
        add(el, r.weights[:, None] * (-dn_u[:, None] * v - uu[:, None] * dn_v
                                      + params.beta / h * uu[:, None] * v))
    return out


def test_galerkin_consistency_for_smooth_solution():
    problem = make_problem("flower2d")
    disc = discretize(problem, 8, 2, 3, 8)
    params = BvpParams()
    system = assemble(problem, disc, params)
    a_u = _consistency_oracle(problem, disc, params)
    # a_h(u, v) = l_h(v), hence a_h(u - u_h, v) = g_h(u_h, v)
    assert np.linalg.norm(a_u - system.b) <= 1e-6 * np.linalg.norm(system.b)
    x = np.linalg.solve(system.A.toarray(), system.b)
    G = assemble_ghost_penalty("face_jumps", disc.mesh, disc.classification, disc.spaces[0],
                               params)
    a_h = system.A - G
    assert np.linalg.norm(a_u - a_h @ x - G @ x) <= 1e-6 * np.linalg.norm(system.b)


# --- extension-property ratios ----------------------------------------------

def _ep4_bound(mesh, cls, V, params):
    """2 h^2 max_T sum over ghost faces of T of sum_j gamma_j h^(2j-1) lambda_max."""
    h = penalty_length(mesh)
    faces = cls.ghost_faces
    rule = full_face_rules(mesh, faces, 2 * V.order)
    normals = mesh.face_geometry(rule.owner)[0]
    per_el = {}
    for f in faces:
        sel = rule.owner == f
        for e in (mesh.face_left[f], mesh.face_right[f]):
            total = 0.0
            for j in range(V.order + 1):
                d = V.normal_derivative(np.full(sel.sum(), e), rule.points[sel], normals[sel], j)
                gram = (d * rule.weights[sel, None]).T @ d
                total += params.gamma_j(j) * h ** (2 * j - 1) * np.linalg.eigvalsh(gram).max()
            per_el[e] = per_el.get(e, 0.0) + total
    return 2 * h ** 2 * max(per_el.values())


def test_ep4_below_trace_inequality_bound():
    box = np.array([[-0.51, 0.51]] * 2)
    m, cls, V, q = setup(circle2d(0.25).translate([0.037, 0.037]), 6, 1, box=box)
    params = BvpParams()
    ep = extension_ratios(m, cls, V, q, params)
    bound = _ep4_bound(m, cls, V, params)
    assert 0 < ep["ep4"] <= bound * (1 + 1e-10)
    assert ep["ep1"] >= 1.0 - 1e-10 and ep["ep3"] >= 1.0 - 1e-10


def test_ep_ratios_identity_without_cut():
    m = build_structured_mesh(BOX, 4)
    cls = classify(m, LevelSet(lambda x: -np.ones(len(x)), dim=2))
    V = BrokenSpace(m, cls.active_elements, 1)
    q = domain_quadrature(m, cls, 0, 2)
    ep = extension_ratios(m, cls, V, q, BvpParams())
    assert np.isclose(ep["ep1"], 1.0) and np.isclose(ep["ep3"], 1.0)
    assert ep["ep4"] == 0.0


# --- interface problem ------------------------------------------------------

def test_harmonic_weights_high_contrast():
    p = InterfaceParams(1.0, 1e6, beta_gamma_tilde=50.0)
    w1, w2 = p.omega
    assert np.isclose(w1 + w2, 1.0)
    assert np.isclose(w1, 1e6 / (1 + 1e6))
    assert np.isclose(p.beta_gamma, 2 * 50.0 * (1 - 1e-6), rtol=1e-9)
    assert p.beta_gamma <= 2 * 50.0 * min(1.0, 1e6)
    a, b, pen = interface_weights(p, h=0.5)
    assert (a, b) == p.omega and np.isclose(pen, p.beta_gamma / 0.5)


def test_cut_area_weights_sum_to_one():
    p = InterfaceParams(2.0, 5.0, weighting=Weighting.CUT_AREA)
    v1, v2 = np.array([0.1, 0.3]), np.array([0.2, 1e-6])
    w1, w2, _ = interface_weights(p, v1, v2, np.array([0.1, 0.1]))
    assert np.allclose(w1 + w2, 1.0)


def _poly_interface_problem(p, phi, box):
    u = patch_polynomial(p)
    return InterfaceProblem("poly", phi, ScalarField(u, 2), ScalarField(u, 2), box)


@pytest.mark.parametrize("weighting", ["harmonic", "cut_area"])
def test_interface_system_symmetric_positive(weighting):
    problem = make_problem("if_flower_b")
    params = InterfaceParams(*problem.kappa, weighting=weighting)
    disc = discretize(problem, 8, 1, 1, 2)
    A = assemble(problem, disc, params).A
    assert abs(A - A.T).max() == 0
    assert np.linalg.eigvalsh(A.toarray()).min() > 0


def test_interface_matches_single_domain_for_polynomials():
    box = np.array([[-1.0, 1.0]] * 2)
    phi = circle2d(0.55, [0.02, -0.03])
    iface = _poly_interface_problem(2, phi, box)
    whole = ManufacturedProblem("poly", LevelSet(lambda x: -np.ones(len(x)), dim=2),
                                ScalarField(patch_polynomial(2), 2), box)
    ri = solve_problem(iface, 6, 2, depth=2)
    rw = solve_problem(whole, 6, 2, depth=2)
    assert ri.errors.l2 < 1e-9 and rw.errors.l2 < 1e-9
    pts = np.random.default_rng(0).uniform(-0.99, 0.99, (200, 2))
    mesh = ri.discretization.mesh
    el = mesh.locate(pts)
    side1 = phi(pts) < 0
    xs = ri.system.split(ri.coefficients)
    vi = np.empty(len(pts))
    for s, (V, x) in enumerate(zip(ri.discretization.spaces, xs)):
        mask = side1 if s == 0 else ~side1
        vi[mask] = V.field_values(x, el[mask], pts[mask])
    vw = rw.discretization.spaces[0].field_values(rw.coefficients, el, pts)
    assert np.abs(vi - vw).max() < 1e-8


def test_interface_jump_data_reproduced():
    # u1 - u2 = 1 on Γ, different fluxes: both sides are still exact polynomials
    box = np.array([[-1.0, 1.0]] * 2)
    x, y = sympy.symbols("x y", real=True)
    u1 = ScalarField(1 + x - 2 * y, 2, 3.0)
    u2 = ScalarField(0.5 * x + y, 2, 1.0)
    problem = InterfaceProblem("jump", half_plane([1.0, 0.4], 0.113), u1, u2, box)
    res = solve_problem(problem, 6, 1, depth=0)
    assert res.errors.l2 < 1e-9
    assert sp.issparse(res.system.A)
