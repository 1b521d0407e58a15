"""Error norms, EOC tables and the experiment drivers."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import (BvpParams, GhostPenalty, InterfaceParams, assemble_bvp,
                       assemble_interface, penalty_length)
from .config import StudyConfig, parse_levelset
from .geometry import classify, classify_two_domain, levelset_from_values
from .linalg import SolverError, condition_number, solve
from .mesh import build_structured_mesh
from .problems import InterfaceProblem, make_problem
from .quadrature import domain_quadrature
from .space import BrokenSpace

log = logging.getLogger(__name__)

CONVERGE_COLUMNS = ["n", "h", "dofs", "l2", "eoc_l2", "h1", "eoc_h1", "energy", "eoc_energy"]
SWEEP_COLUMNS = ["delta", "variant", "l2", "h1", "kappa", "converged"]
SCALE_COLUMNS = ["scale", "variant", "kappa_max", "kappa_min", "fluctuation", "failed"]

DESK_LIMIT_3D = 24


@dataclass
class ErrorReport:
    l2: float
    h1_semi: float
    h1_full: float
    energy: float
    dofs: int
    h: float


@dataclass
class Discretization:
    """Mesh, classification, space(s) and rules for one solve."""

    mesh: object
    classification: object
    spaces: tuple
    quadratures: tuple
    depth: int
    order: int


@dataclass
class SolveResult:
    discretization: Discretization
    system: object
    coefficients: np.ndarray
    errors: ErrorReport | None
    cond: object = None


def eoc(errors, hs):
    """Rates log(E_{k-1}/E_k) / log(h_{k-1}/h_k); the first entry is NaN."""
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    out = np.full(len(errors), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:])
    return out


@dataclass
class EocTable:
    rows: list = field(default_factory=list)
    columns: list = field(default_factory=lambda: list(CONVERGE_COLUMNS))

    def add(self, n, h, dofs, l2, h1, energy):
        self.rows.append({"n": n, "h": h, "dofs": dofs, "l2": l2, "h1": h1, "energy": energy})
        self._update_rates()

    def _update_rates(self):
        hs = [r["h"] for r in self.rows]
        for key in ("l2", "h1", "energy"):
            rates = eoc([r[key] for r in self.rows], hs)
            for r, e in zip(self.rows, rates):
                r[f"eoc_{key}"] = e

    def column(self, key):
        return np.array([r[key] for r in self.rows], dtype=float)

    def to_csv(self, path):
        write_csv(path, self.columns, self.rows)

    @classmethod
    def from_csv(cls, path):
        table = cls()
        for r in read_csv(path):
            table.rows.append({k: (int(v) if k in ("n", "dofs") else float(v))
                               for k, v in r.items()})
        return table

    def format(self):
        head = f"{'n':>5} {'h':>9} {'dofs':>8} {'l2':>10} {'eoc':>6} {'h1':>10} {'eoc':>6}"
        lines = [head]
        for r in self.rows:
            lines.append(f"{r['n']:>5} {r['h']:9.3e} {r['dofs']:>8} {r['l2']:10.3e} "
                         f"{r['eoc_l2']:6.2f} {r['h1']:10.3e} {r['eoc_h1']:6.2f}")
        return "\n".join(lines)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- discretization ---------------------------------------------------------

def discretize(problem, n, order, depth, quad_order, eps=1e-12):
    mesh = build_structured_mesh(problem.box, n)
    if isinstance(problem, InterfaceProblem):
        cls = classify_two_domain(mesh, problem.levelset, eps)
        sides = (cls.side1, cls.side2)
    else:
        cls = classify(mesh, problem.levelset, eps)
        sides = (cls,)
    spaces = tuple(BrokenSpace(mesh, c.active_elements, order) for c in sides)
    quads = tuple(domain_quadrature(mesh, c, depth, quad_order) for c in sides)
    return Discretization(mesh, cls, spaces, quads, depth, quad_order)


def bvp_params(cfg):
    return BvpParams(cfg.beta, cfg.gamma, cfg.gp_variant, cfg.gamma_proj, cfg.c_s,
                     cfg.penalty_length)


def interface_params(cfg, problem):
    k1, k2 = problem.kappa
    return InterfaceParams(k1, k2, cfg.beta, cfg.beta_gamma_tilde, cfg.weighting, cfg.gamma,
                           cfg.gp_variant, cfg.gamma_proj, cfg.c_s, cfg.scale_ghost_by_kappa,
                           cfg.penalty_length)


def assemble(problem, disc, params):
    if isinstance(problem, InterfaceProblem):
        return assemble_interface(disc.mesh, disc.classification, disc.spaces,
                                  disc.quadratures, params, problem.f(), problem.g(),
                                  problem.g_D, problem.g_N)
    return assemble_bvp(disc.mesh, disc.classification, disc.spaces[0], disc.quadratures[0],
                        params, problem.f, problem.g)


def solve_problem(problem, n, order, params=None, depth=None, quad_order=None, eps=1e-12,
                  errors=True, cond=False, error_depth=None):
    """Discretize, assemble, solve and (optionally) measure one configuration.

    With ``errors=False`` the linear solve is skipped and ``coefficients`` is
    None; condition-number sweeps only need the matrix.
    """
    depth = order + 1 if depth is None else depth
    quad_order = 2 * order if quad_order is None else quad_order
    if params is None:
        params = (InterfaceParams(*problem.kappa) if isinstance(problem, InterfaceProblem)
                  else BvpParams())
    disc = discretize(problem, n, order, depth, quad_order, eps)
    system = assemble(problem, disc, params)
    x = solve(system.A, system.b) if errors else None
    err = compute_errors(disc, x, problem, params, error_depth) if errors else None
    rep = condition_number(system.A) if cond else None
    return SolveResult(disc, system, x, err, rep)


# --- errors -----------------------------------------------------------------

_EVAL_CHUNK = 250_000


def _sq_errors(V, xi, u, rule, kappa):
    """Sums of w*e^2 and w*kappa*|grad e|^2 over a rule, evaluated in chunks."""
    l2 = h1 = 0.0
    for s in range(0, len(rule), _EVAL_CHUNK):
        sl = slice(s, s + _EVAL_CHUNK)
        own, pts, w = rule.owner[sl], rule.points[sl], rule.weights[sl]
        e = V.field_values(xi, own, pts) - u(pts)
        ge = V.field_gradients(xi, own, pts) - u.gradient(pts)
        l2 += float(np.sum(w * e ** 2))
        h1 += kappa * float(np.sum(w * np.sum(ge ** 2, axis=1)))
    return l2, h1


def _values(V, xi, owner, pts):
    out = np.empty(len(pts))
    for s in range(0, len(pts), _EVAL_CHUNK):
        sl = slice(s, s + _EVAL_CHUNK)
        out[sl] = V.field_values(xi, owner[sl], pts[sl])
    return out


def default_extra_depth(dim):
    """Error-rule oversampling depth: 2 in 2D, 1 in 3D (memory bound)."""
    return 2 if dim == 2 else 1


def compute_errors(disc, x, problem, params=None, extra_depth=None, extra_order=2):
    """L2, κ-weighted H1 seminorm and energy errors over the physical region.

    Rules are rebuilt ``extra_depth`` levels finer and ``extra_order``
    degrees higher than the ones used for assembly. The energy norm uses
    the same penalty length as ``params``.
    """
    mesh = disc.mesh
    mode = getattr(params, "penalty_length", "spacing")
    h = penalty_length(mesh, mode)
    extra_depth = default_extra_depth(mesh.dim) if extra_depth is None else extra_depth
    depth = disc.depth + extra_depth
    order = disc.order + extra_order
    interface = isinstance(problem, InterfaceProblem)
    if interface:
        sides = (disc.classification.side1, disc.classification.side2)
        fields_ = problem.fields()
    else:
        sides = (disc.classification,)
        fields_ = (problem.u,)
    offset = 0
    l2 = h1 = en = 0.0
    coefs, gamma_rule = [], None
    for cls, V, u in zip(sides, disc.spaces, fields_):
        xi = x[offset:offset + V.n_dofs]
        offset += V.n_dofs
        coefs.append(xi)
        kappa = u.kappa
        q = domain_quadrature(mesh, cls, depth, order)
        a, b = _sq_errors(V, xi, u, q.volume, kappa)
        l2 += a
        h1 += b
        en += b
        f = q.faces
        if len(f):
            jump = (_values(V, xi, mesh.face_left[f.owner], f.points)
                    - _values(V, xi, mesh.face_right[f.owner], f.points))
            en += kappa / h * float(np.sum(f.weights * jump ** 2))
        bnd = q.boundary
        if len(bnd):
            eb = _values(V, xi, mesh.face_left[bnd.owner], bnd.points) - u(bnd.points)
            en += kappa / h * float(np.sum(bnd.weights * eb ** 2))
        if gamma_rule is None:
            gamma_rule = q.interface
    g = gamma_rule
    if g is not None and len(g):
        e1 = _values(disc.spaces[0], coefs[0], g.owner, g.points) - fields_[0](g.points)
        if interface:
            k1, k2 = problem.kappa
            e2 = _values(disc.spaces[1], coefs[1], g.owner, g.points) - fields_[1](g.points)
            en += 2 * k1 * k2 / (k1 + k2) / h * float(np.sum(g.weights * (e1 - e2) ** 2))
        else:
            en += float(np.sum(g.weights * e1 ** 2)) / h
    dofs = sum(V.n_dofs for V in disc.spaces)
    return ErrorReport(math.sqrt(l2), math.sqrt(h1), math.sqrt(l2 + h1), math.sqrt(en), dofs,
                       mesh.h)


# --- drivers ----------------------------------------------------------------

def _problem(cfg):
    problem = make_problem(cfg.problem) if isinstance(cfg.problem, str) else cfg.problem
    if cfg.levelset:
        name, args = parse_levelset(cfg.levelset)
        phi = levelset_from_values(name, args)
        if phi.dim is not None and phi.dim != problem.dim:
            raise ValueError(f"level set {name!r} is {phi.dim}D, problem is {problem.dim}D")
        problem = replace(problem, levelset=phi)
    return problem


def _params(cfg, problem):
    if isinstance(problem, InterfaceProblem):
        return interface_params(cfg, problem)
    return bvp_params(cfg)


def _check_size(cfg, problem, n):
    if problem.dim == 3 and n > DESK_LIMIT_3D and not cfg.allow_large:
        raise ValueError(f"3D mesh with n = {n} exceeds the desk-scale limit "
                         f"{DESK_LIMIT_3D}; set allow_large = true to run it")


def run_convergence(cfg: StudyConfig, out_csv=None, on_row=None):
    """Solve on every mesh of ``cfg.n_list`` and tabulate errors with EOC."""
    problem = _problem(cfg)
    params = _params(cfg, problem)
    table = EocTable()
    failures = 0
    for n in cfg.n_list:
        _check_size(cfg, problem, n)
        try:
            res = solve_problem(problem, n, cfg.order, params, cfg.depth_for(cfg.order),
                                cfg.quad_order(cfg.order), cfg.eps,
                                error_depth=cfg.error_extra_depth)
            e = res.errors
            table.add(n, e.h, e.dofs, e.l2, e.h1_full, e.energy)
        except SolverError as exc:
            log.warning("n = %d failed: %s", n, exc)
            failures += 1
            mesh_h = build_structured_mesh(problem.box, n).h
            table.add(n, mesh_h, 0, math.nan, math.nan, math.nan)
        if on_row:
            on_row(table.rows[-1])
    table.failures = failures
    path = out_csv or cfg.out_csv
    if path:
        table.to_csv(path)
    return table


def run_interface_convergence(cfg: StudyConfig, out_csv=None, on_row=None):
    """Interface convergence study; the ``h1`` column is the κ-weighted seminorm."""
    problem = _problem(cfg)
    if not isinstance(problem, InterfaceProblem):
        raise ValueError(f"{problem.name} is not an interface problem")
    params = _params(cfg, problem)
    table = EocTable()
    failures = 0
    for n in cfg.n_list:
        _check_size(cfg, problem, n)
        try:
            res = solve_problem(problem, n, cfg.order, params, cfg.depth_for(cfg.order),
                                cfg.quad_order(cfg.order), cfg.eps,
                                error_depth=cfg.error_extra_depth)
            e = res.errors
            table.add(n, e.h, e.dofs, e.l2, e.h1_semi, e.energy)
        except SolverError as exc:
            log.warning("n = %d failed: %s", n, exc)
            failures += 1
            table.add(n, build_structured_mesh(problem.box, n).h, 0, math.nan, math.nan,
                      math.nan)
        if on_row:
            on_row(table.rows[-1])
    table.failures = failures
    path = out_csv or cfg.out_csv
    if path:
        table.to_csv(path)
    return table


def sweep_offsets(mesh, steps, delta_step):
    """Translation offsets δ_k (h, h, ...) with h the grid spacing, k = 0..steps-1."""
    h = mesh.cell_size
    deltas = np.arange(steps) * delta_step
    return deltas, deltas[:, None] * h[None, :]


def run_translation_sweep(cfg: StudyConfig, out_csv=None, variants=None, params=None):
    """Errors and condition numbers over a family of translated domains."""
    problem = _problem(cfg)
    variants = cfg.variants if variants is None else variants
    mesh = build_structured_mesh(problem.box, cfg.n)
    deltas, offsets = sweep_offsets(mesh, cfg.steps, cfg.delta_step)
    base = _params(cfg, problem) if params is None else params
    rows = []
    for var in variants:
        var = GhostPenalty.parse(var)
        prm = _with_variant(base, var)
        for delta, off in zip(deltas, offsets):
            shifted = _translated(problem, off)
            row = {"delta": float(delta), "variant": var.value, "l2": math.nan,
                   "h1": math.nan, "kappa": math.nan, "converged": False}
            try:
                res = solve_problem(shifted, cfg.n, cfg.order, prm, cfg.depth_for(cfg.order),
                                    cfg.quad_order(cfg.order), cfg.eps, errors=cfg.errors,
                                    cond=cfg.condition, error_depth=cfg.error_extra_depth)
                if res.errors is not None:
                    row["l2"], row["h1"] = res.errors.l2, res.errors.h1_full
                if res.cond is not None:
                    row["kappa"] = res.cond.kappa
                row["converged"] = True
            except (SolverError, np.linalg.LinAlgError) as exc:
                log.info("delta = %g, %s: %s", delta, var.value, exc)
            rows.append(row)
    path = out_csv or cfg.out_csv
    if path:
        write_csv(path, SWEEP_COLUMNS, rows)
    return rows


def _translated(problem, offset):
    if isinstance(problem, InterfaceProblem):
        return InterfaceProblem(problem.name, problem.levelset.translate(offset), problem.u1,
                                problem.u2, problem.box, problem.description)
    return problem.translated(offset)


def _with_variant(params, variant):
    return replace(params, gp_variant=variant)


def sweep_ratio(rows, key, variant):
    vals = np.array([r[key] for r in rows if r["variant"] == variant and r["converged"]],
                    dtype=float)
    vals = vals[np.isfinite(vals)]
    if len(vals) == 0:
        return math.nan
    return float(vals.max() / vals.min())


def run_parameter_scaling(cfg: StudyConfig, out_csv=None):
    """Condition-number sweep per rescaling of the ghost penalty parameters."""
    problem = _problem(cfg)
    base = _params(cfg, problem)
    if isinstance(problem, InterfaceProblem):
        raise ValueError("parameter scaling is defined for boundary-value problems")
    sweep_cfg = cfg.update(errors=False, condition=True)
    rows = []
    for variant in cfg.variants:
        for s in cfg.scales:
            prm = _with_variant(base.scaled(s), GhostPenalty.parse(variant))
            sweep = run_translation_sweep(sweep_cfg, out_csv="", variants=[variant], params=prm)
            k = np.array([r["kappa"] for r in sweep if r["converged"]], dtype=float)
            k = k[np.isfinite(k)]
            failed = sum(1 for r in sweep if not r["converged"] or not np.isfinite(r["kappa"]))
            kmax = float(k.max()) if len(k) else math.nan
            kmin = float(k.min()) if len(k) else math.nan
            rows.append({"scale": float(s), "variant": GhostPenalty.parse(variant).value,
                         "kappa_max": kmax, "kappa_min": kmin,
                         "fluctuation": kmax / kmin if len(k) else math.nan,
                         "failed": failed})
    path = out_csv or cfg.out_csv
    if path:
        write_csv(path, SCALE_COLUMNS, rows)
    return rows
