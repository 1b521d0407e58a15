"""Stabilized cut discontinuous Galerkin methods for Poisson and interface problems."""

from .assembly import (BvpParams, GhostPenalty, InterfaceParams, SystemOperator, Weighting,
                       assemble_bvp, assemble_ghost_penalty, assemble_interface)
from .config import StudyConfig, load_config, parse_config
from .estimator import CutDGInterface, CutDGPoisson
from .geometry import LevelSet, builtin_levelsets, classify, classify_two_domain
from .linalg import CondReport, SolverError, condition_number, solve
from .mesh import BackgroundMesh, build_structured_mesh
from .problems import InterfaceProblem, ManufacturedProblem, make_problem
from .quadrature import QuadratureRule, domain_quadrature, reference_rule
from .space import BrokenSpace
from .study import (EocTable, ErrorReport, compute_errors, eoc, run_convergence,
                    run_interface_convergence, run_parameter_scaling, run_translation_sweep,
                    solve_problem)

__version__ = "0.1.0"

__all__ = [
    "BackgroundMesh", "BrokenSpace", "BvpParams", "CondReport", "CutDGInterface", "CutDGPoisson",
    "EocTable", "ErrorReport", "GhostPenalty", "InterfaceParams", "InterfaceProblem", "LevelSet",
    "ManufacturedProblem", "QuadratureRule", "SolverError", "StudyConfig", "SystemOperator",
    "Weighting", "assemble_bvp", "assemble_ghost_penalty", "assemble_interface",
    "build_structured_mesh", "builtin_levelsets", "classify", "classify_two_domain",
    "compute_errors", "condition_number", "domain_quadrature", "eoc", "load_config",
    "make_problem", "parse_config", "reference_rule", "run_convergence",
    "run_interface_convergence", "run_parameter_scaling", "run_translation_sweep", "solve",
    "solve_problem",
]
