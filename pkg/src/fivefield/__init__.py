"""XFEM five-field solver for Darcy flow in a fractured 3D matrix."""

from .assembly import BlockSystem, MaterialFields, assemble_blocks, eliminate_dirichlet
from .cases import CASES, CaseDefinition, get_case
from .harness import compare_with_reference, compute_error_norms, convergence_study, run_case
from .mesh import BoxDomain, Dirichlet, FractureGeometry, Neumann
from .optimizer import FiveFieldProblem, FiveFieldState, SolveReport, solve_cg, solve_kkt_direct

__all__ = [
    "BlockSystem", "BoxDomain", "CASES", "CaseDefinition", "Dirichlet", "FiveFieldProblem", "FiveFieldState",
    "FractureGeometry", "MaterialFields", "Neumann", "SolveReport", "assemble_blocks", "compare_with_reference",
    "compute_error_norms", "convergence_study", "eliminate_dirichlet", "get_case", "run_case", "solve_cg",
    "solve_kkt_direct",
]
