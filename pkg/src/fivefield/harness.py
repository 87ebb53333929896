"""End-to-end pipeline: mesh, cut, DOFs, assembly, solve, errors, studies."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import BlockSystem, assemble_blocks
from .cases import CaseDefinition, get_case
from .cutting import classify_and_cut, interface_pieces
from .export import decomposition
from .mesh import generate_box_tet_mesh, generate_fracture_tri_mesh
from .optimizer import FiveFieldProblem, FiveFieldState, SolveReport, solve_cg
from .quadrature import map_tets, quadrature
from .reference import sample_on_lines, solve_equidim_2d
from .xfem import EnrichmentSpec, XFEMSpace, build_dof_map


class PipelineError(RuntimeError):
    """Failure of one pipeline stage; `stage` names it."""

    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage
        self.cause = exc


@dataclass
class ErrorReport:
    l2_error: float
    h1_seminorm_error: float
    h1_error: float
    delta_D: float


@dataclass
class CaseRun:
    case: CaseDefinition
    level: int
    blocks: BlockSystem
    problem: FiveFieldProblem
    state: FiveFieldState
    report: SolveReport
    timings: dict = field(default_factory=dict)
    errors: Optional[ErrorReport] = None

    @property
    def space(self) -> XFEMSpace:
        return self.blocks.space

    def summary(self) -> str:
        dm = self.blocks.dofmap
        extra = {
            "case": self.case.name, "level": self.level, "N_D": dm.N_D, "N_F": dm.N_F,
            "M": dm.M_F, "delta_D": f"{self.space.mesh.delta_D:.6g}",
        }
        if self.errors is not None:
            extra["l2_error"] = f"{self.errors.l2_error:.6e}"
            extra["h1_error"] = f"{self.errors.h1_seminorm_error:.6e}"
        for k, v in self.timings.items():
            extra[f"time_{k}"] = f"{v:.3f}"
        return self.report.to_text(**extra)


class _Stage:
    def __init__(self, name, timings):
        self.name, self.timings = name, timings

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, et, ev, tb):
        self.timings[self.name] = time.perf_counter() - self.t0
        if ev is not None and not isinstance(ev, PipelineError):
            raise PipelineError(self.name, ev) from ev
        return False


def build_blocks(case: CaseDefinition, level: int, timings: Optional[dict] = None,
                 eta_weighted_cross: bool = False) -> BlockSystem:
    timings = {} if timings is None else timings
    if not 0 <= level < len(case.levels):
        raise PipelineError("setup", ValueError(f"{case.name} has levels 0..{len(case.levels) - 1}"))
    lev = case.levels[level]
    with _Stage("mesh", timings):
        mesh3d = generate_box_tet_mesh(case.box, lev.n3)
        mesh2d = generate_fracture_tri_mesh(case.fracture, divisions=lev.nf)
    with _Stage("cut", timings):
        cut = classify_and_cut(mesh3d, case.fracture)
        pieces = interface_pieces(cut, mesh2d)
    with _Stage("dofs", timings):
        dofmap = build_dof_map(mesh3d, mesh2d, cut, case.box, case.fracture)
        space = XFEMSpace(mesh3d, case.fracture, cut, dofmap, EnrichmentSpec.from_fracture(case.fracture))
    with _Stage("assemble", timings):
        blocks = assemble_blocks(space, mesh2d, pieces, case.materials, eta_weighted_cross=eta_weighted_cross)
    return blocks


def run_case(case, level: int = 0, tol: Optional[float] = None, max_iters: Optional[int] = None) -> CaseRun:
    """Full pipeline for a case name or definition.

    Raises
    ------
    PipelineError
        Tagged with the failing stage.
    """
    if isinstance(case, str):
        try:
            case = get_case(case)
        except ValueError as exc:
            raise PipelineError("setup", exc) from exc
    timings: dict = {}
    blocks = build_blocks(case, level, timings)
    with _Stage("factorize", timings):
        problem = FiveFieldProblem(blocks)
    with _Stage("solve", timings):
        state, report = solve_cg(problem, tol=case.tol if tol is None else tol,
                                 max_iters=case.max_iters if max_iters is None else max_iters)
    run = CaseRun(case, level, blocks, problem, state, report, timings)
    if case.analytic is not None:
        with _Stage("errors", timings):
            run.errors = compute_error_norms(blocks.space, state.h_D, case.analytic)
    return run


def compute_error_norms(space: XFEMSpace, h_D: np.ndarray, analytic, degree: int = 4,
                        chunk: int = 20000) -> ErrorReport:
    """L2, H1-seminorm and H1 errors against a sided closed form."""
    cells, parent, side = decomposition(space)
    rule = quadrature("tet", degree)
    l2 = h1 = 0.0
    for s in range(0, len(cells), chunk):
        sl = slice(s, s + chunk)
        pts, w = map_tets(cells[sl], rule)
        nq = w.shape[1]
        p = pts.reshape(-1, 3)
        sd = np.repeat(side[sl], nq)
        val, grad = space.evaluate(h_D, p, side=sd, tets=np.repeat(parent[sl], nq))
        ex, exg = analytic(p, sd)
        wf = w.reshape(-1)
        l2 += float(np.sum(wf * (val - ex) ** 2))
        h1 += float(np.sum(wf * np.sum((grad - exg) ** 2, axis=1)))
    return ErrorReport(np.sqrt(l2), np.sqrt(h1), np.sqrt(l2 + h1), float(space.mesh.delta_D))


def fitted_rate(h, err) -> float:
    """Least-squares slope of log(err) against log(h)."""
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


@dataclass
class StudyRow:
    level: int
    N_D: int
    N_F: int
    M: int
    n_it: int
    delta_D: float
    l2_error: float
    h1_error: float
    J: float
    seconds: float


@dataclass
class StudyResult:
    rows: list
    l2_rate: float
    h1_rate: float

    def consecutive_rates(self):
        h = np.array([r.delta_D for r in self.rows])
        out = []
        for key in ("l2_error", "h1_error"):
            e = np.array([getattr(r, key) for r in self.rows])
            out.append(np.log(e[1:] / e[:-1]) / np.log(h[1:] / h[:-1]))
        return out

    def to_csv(self, path) -> None:
        cols = ["level", "N_D", "N_F", "M", "n_it", "delta_D", "l2_error", "h1_error", "J", "seconds"]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for r in self.rows:
                fh.write(",".join(f"{getattr(r, c):.17g}" if isinstance(getattr(r, c), float) else str(getattr(r, c))
                                  for c in cols) + "\n")


def convergence_study(case, levels) -> StudyResult:
    """Run a case on several levels and fit convergence rates.

    `levels` is a count (first k levels) or an explicit sequence.
    """
    if isinstance(case, str):
        case = get_case(case)
    if case.analytic is None:
        raise ValueError(f"{case.name} has no closed-form solution")
    idx = list(range(levels)) if isinstance(levels, int) else list(levels)
    if len(idx) < 3:
        raise ValueError("a convergence study needs at least three levels")
    rows = []
    for lv in idx:
        t0 = time.perf_counter()
        run = run_case(case, lv)
        dm = run.blocks.dofmap
        rows.append(StudyRow(lv, dm.N_D, dm.N_F, dm.M_F, run.report.iterations, run.errors.delta_D,
                             run.errors.l2_error, run.errors.h1_seminorm_error, run.report.functional_value,
                             time.perf_counter() - t0))
        del run
    h = [r.delta_D for r in rows]
    return StudyResult(rows, fitted_rate(h, [r.l2_error for r in rows]), fitted_rate(h, [r.h1_error for r in rows]))


def sample_solution_on_lines(run: CaseRun, n_samples: int = 200):
    """Sample h_D along the case's 3D segments; side taken from position."""
    return sample_on_lines(lambda p: run.space.evaluate(run.state.h_D, p, grad=False)[0], run.case.lines, n_samples)


def compare_with_reference(run: CaseRun, n_samples: int = 200, reference=None):
    """Relative L2 discrepancy per line between solver and 2D oracle.

    Returns ``(discrepancies, solver_samples, reference_samples, reference)``.
    """
    case = run.case
    if case.reference is None:
        raise ValueError(f"{case.name} has no reference problem")
    ref = solve_equidim_2d(case.reference) if reference is None else reference
    ours = sample_solution_on_lines(run, n_samples)
    theirs = [(p, ref.evaluate(case.to_plane(p))) for p, _ in ours]
    disc = [float(np.linalg.norm(a[1] - b[1]) / np.linalg.norm(b[1])) for a, b in zip(ours, theirs)]
    return disc, ours, theirs, ref


def plane_jump(run: CaseRun, xf: np.ndarray) -> np.ndarray:
    """``h_D^+ - h_D^-`` at fracture-plane points given in fracture coordinates
    (the points may lie outside the fracture footprint)."""
    x3 = run.case.fracture.to_global(np.atleast_2d(xf))
    hp, _ = run.space.evaluate(run.state.h_D, x3, side=1.0, grad=False)
    hm, _ = run.space.evaluate(run.state.h_D, x3, side=-1.0, grad=False)
    return hp - hm
