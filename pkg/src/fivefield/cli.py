"""Command line entry point: ``fivefield run|study|reference|compare``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .cases import CASES, get_case
from .export import export_interface_comparison, export_slice_plot, export_vtk
from .harness import PipelineError, compare_with_reference, convergence_study, plane_jump, run_case
from .reference import sample_on_lines, solve_equidim_2d, write_line_csv

log = logging.getLogger("fivefield")

EXIT_OK, EXIT_FAIL, EXIT_CHECK = 0, 1, 2

# acceptance thresholds used by --check
MAX_ITERS = {"test1": 30, "test2": 300, "test3": 40}
LINE_TOL = 0.05


def output_dir(arg) -> Path:
    out = Path(arg or os.environ.get("FIVEFIELD_OUTPUT_DIR") or "fivefield_output")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_checks(run) -> list:
    problems = []
    name, rep = run.case.name, run.report
    if not rep.converged:
        problems.append(f"CG did not converge (residual {rep.relative_residual:.3e})")
    if name in MAX_ITERS and rep.iterations > MAX_ITERS[name]:
        problems.append(f"{rep.iterations} CG iterations > {MAX_ITERS[name]}")
    if name == "test0":
        mesh = run.space.mesh
        nodal = run.state.h_D[: mesh.n_vertices]
        z = mesh.vertices[:, 2]
        side = run.space.cut.vertex_side
        dev = np.abs(nodal - (z + side)).max()
        if dev > 1e-8:
            problems.append(f"nodal deviation {dev:.3e} > 1e-8")
        if np.abs(run.state.h_F).max() > 1e-8:
            problems.append("h_F not zero")
        if rep.functional_value > 1e-14:
            problems.append(f"J = {rep.functional_value:.3e} > 1e-14")
    if name == "test3":
        bary = run.case.fracture.barycenter
        if abs(plane_jump(run, bary[None])[0]) <= 0.1:
            problems.append("jump at the fracture barycenter <= 0.1")
    return problems


def cmd_run(args) -> int:
    out = output_dir(args.out)
    run = run_case(args.case, args.level, tol=args.tol)
    case = run.case
    stem = out / f"{case.name}_L{args.level}"
    stem.with_suffix(".txt").write_text(run.summary())
    if case.slice_plane is not None:
        o, e1, e2, ext = case.slice_plane
        for side, tag in ((1.0, "plus"), (-1.0, "minus")):
            export_slice_plot(f"{stem}_slice_{tag}.csv", run.space, run.state.h_D, o, e1, e2, ext, side=side)
    export_interface_comparison(f"{stem}_interface.csv", run.blocks, run.state)
    if not args.no_vtk:
        export_vtk(f"{stem}.vtk", run.blocks, run.state)
    if case.lines:
        from .harness import sample_solution_on_lines
        write_line_csv(f"{stem}_lines.csv", case.line_labels, sample_solution_on_lines(run))
    sys.stdout.write(run.summary())
    if args.check:
        problems = _run_checks(run)
        for p in problems:
            log.error("check failed: %s", p)
        return EXIT_CHECK if problems else EXIT_OK
    return EXIT_OK


def cmd_study(args) -> int:
    out = output_dir(args.out)
    res = convergence_study(args.case, args.levels)
    res.to_csv(out / f"{args.case}_study.csv")
    print(f"{'level':>5} {'N_D':>7} {'N_F':>6} {'n_it':>4} {'delta_D':>10} {'L2':>12} {'H1':>12}")
    for r in res.rows:
        print(f"{r.level:>5} {r.N_D:>7} {r.N_F:>6} {r.n_it:>4} {r.delta_D:>10.4g} {r.l2_error:>12.4e} {r.h1_error:>12.4e}")
    print(f"rate_l2={res.l2_rate:.4f}\nrate_h1={res.h1_rate:.4f}")
    if args.check:
        problems = []
        if not 1.8 <= res.l2_rate <= 2.2:
            problems.append(f"L2 rate {res.l2_rate:.3f} outside [1.8, 2.2]")
        if not 0.85 <= res.h1_rate <= 1.15:
            problems.append(f"H1 rate {res.h1_rate:.3f} outside [0.85, 1.15]")
        lim = MAX_ITERS.get(args.case)
        if lim and any(r.n_it > lim for r in res.rows):
            problems.append(f"n_it above {lim}")
        for p in problems:
            log.error("check failed: %s", p)
        return EXIT_CHECK if problems else EXIT_OK
    return EXIT_OK


def cmd_reference(args) -> int:
    out = output_dir(args.out)
    case = get_case(args.case)
    if case.reference is None:
        log.error("%s has no equi-dimensional reference", case.name)
        return EXIT_FAIL
    ref = solve_equidim_2d(case.reference)
    planar = [(case.to_plane(np.array(seg))[0], case.to_plane(np.array(seg))[1]) for seg in case.lines]
    write_line_csv(out / f"{case.name}_reference_lines.csv", case.line_labels,
                   sample_on_lines(ref, planar, args.samples))
    print(f"reference_dofs={ref.n_dofs}")
    return EXIT_OK


def cmd_compare(args) -> int:
    out = output_dir(args.out)
    run = run_case(args.case, args.level)
    if run.case.reference is None:
        log.error("%s has no equi-dimensional reference", run.case.name)
        return EXIT_FAIL
    disc, ours, theirs, _ = compare_with_reference(run, args.samples)
    write_line_csv(out / f"{args.case}_compare.csv", run.case.line_labels, ours,
                   extra={"reference": [t[1] for t in theirs]})
    for label, d in zip(run.case.line_labels, disc):
        print(f"{label} relative_l2={d:.4e}")
    if args.check:
        bad = [l for l, d in zip(run.case.line_labels, disc) if d > LINE_TOL]
        for l in bad:
            log.error("check failed: line %s above %.0f%%", l, 100 * LINE_TOL)
        return EXIT_CHECK if bad else EXIT_OK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fivefield", description="XFEM five-field fracture/matrix flow solver")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, level=True):
        sp.add_argument("case", choices=sorted(CASES))
        if level:
            sp.add_argument("--level", type=int, default=0)
        sp.add_argument("--out", default=None, help="output directory (default: $FIVEFIELD_OUTPUT_DIR)")
        sp.add_argument("--check", action="store_true", help="exit with code 2 if a threshold is violated")

    r = sub.add_parser("run", help="solve one case and export artifacts")
    common(r)
    r.add_argument("--tol", type=float, default=None)
    r.add_argument("--no-vtk", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("study", help="convergence study over mesh levels")
    common(s, level=False)
    s.add_argument("--levels", type=int, default=3)
    s.set_defaults(func=cmd_study)

    f = sub.add_parser("reference", help="solve the 2D equi-dimensional reference")
    common(f, level=False)
    f.add_argument("--samples", type=int, default=200)
    f.set_defaults(func=cmd_reference)

    c = sub.add_parser("compare", help="line samples of solver and reference")
    common(c)
    c.add_argument("--samples", type=int, default=200)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except PipelineError as exc:
        log.error("%s", exc)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
