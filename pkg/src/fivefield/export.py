"""CSV and legacy VTK artifacts."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .assembly import BlockSystem, volume_cells
from .optimizer import FiveFieldState, interface_integrals

FMT = "{:.17g}"


def slice_points(origin, e1, e2, extent, resolution: int = 100):
    """Grid of ``resolution x resolution`` points on a rectangle of a plane."""
    o, a, b = (np.asarray(p, dtype=float) for p in (origin, e1, e2))
    u = np.linspace(0.0, extent[0], resolution)
    v = np.linspace(0.0, extent[1], resolution)
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = o + U.reshape(-1, 1) * a + V.reshape(-1, 1) * b
    return U.ravel(), V.ravel(), pts


def evaluate_slice(space, h_D, origin, e1, e2, extent, resolution: int = 100, side: float = 1.0):
    """Values on a slice grid; points on the fracture plane use `side`."""
    U, V, pts = slice_points(origin, e1, e2, extent, resolution)
    d = space.frac.signed_distance(pts)
    scale = np.linalg.norm(np.ptp(space.mesh.vertices, axis=0))
    sd = np.where(np.abs(d) <= 1e-12 * scale, side, np.where(d > 0, 1.0, -1.0))
    vals, _ = space.evaluate(h_D, pts, side=sd, grad=False)
    return U, V, vals


def export_slice_plot(path, space, h_D, origin, e1, e2, extent, resolution: int = 100, side: float = 1.0):
    U, V, vals = evaluate_slice(space, h_D, origin, e1, e2, extent, resolution, side)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "v", "value"])
        for row in zip(U, V, vals):
            w.writerow([FMT.format(x) for x in row])
    return U, V, vals


def decomposition(space):
    """Sub-tetrahedra not crossing the fracture, with per-cell side and parent.

    Returns (coords (n, 4, 3), parent (n,), side (n,)); untouched
    tetrahedra appear whole.
    """
    mesh = space.mesh
    plain = np.setdiff1d(np.arange(mesh.n_tets), space.support)
    d = space.cut.distance[mesh.tets[plain]]
    side = np.where(d.max(axis=1) > 0, 1.0, -1.0)
    cells, parent, cside = volume_cells(space)
    return (np.concatenate([mesh.vertices[mesh.tets[plain]], cells]),
            np.concatenate([plain, parent]), np.concatenate([side, cside]))


def _unique_points(coords, side, scale):
    flat = coords.reshape(-1, 3)
    s = np.repeat(side, 4)
    key = np.column_stack([np.round(flat / scale, 11), s])
    _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    return first, inv.reshape(-1, 4)


def _write_vtk(path, title, points, cells, cell_type, point_data, cell_data):
    n, k = cells.shape
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(points)} double\n")
        for p in points:
            fh.write(" ".join(FMT.format(x) for x in p) + "\n")
        fh.write(f"CELLS {n} {n * (k + 1)}\n")
        for c in cells:
            fh.write(f"{k} " + " ".join(map(str, c)) + "\n")
        fh.write(f"CELL_TYPES {n}\n")
        fh.write(f"{cell_type}\n" * n)
        if point_data:
            fh.write(f"POINT_DATA {len(points)}\n")
            for name, vals in point_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                fh.write("\n".join(FMT.format(v) for v in vals) + "\n")
        if cell_data:
            fh.write(f"CELL_DATA {n}\n")
            for name, vals in cell_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                fh.write("\n".join(FMT.format(v) for v in vals) + "\n")


def export_vtk(path, blocks: BlockSystem, state: FiveFieldState):
    """3D sub-tet decomposition with one-sided point values, plus the
    fracture grid in ``<stem>_fracture.vtk``. Returns both paths."""
    space = blocks.space
    path = Path(path)
    coords, parent, side = decomposition(space)
    scale = float(np.linalg.norm(np.ptp(space.mesh.vertices, axis=0)))
    first, conn = _unique_points(coords, side, scale)
    pts = coords.reshape(-1, 3)[first]
    pside = np.repeat(side, 4)[first]
    ptet = np.repeat(parent, 4)[first]
    vals, _ = space.evaluate(state.h_D, pts, side=pside, tets=ptet, grad=False)
    _write_vtk(path, "h_D on the cut decomposition", pts, conn, 10,
               {"h_D": vals, "side": pside}, {"side": side, "parent": parent.astype(float)})

    m2 = blocks.mesh2d
    fpath = path.with_name(path.stem + "_fracture.vtk")
    _write_vtk(fpath, "fracture fields", space.frac.to_global(m2.vertices), m2.triangles, 5,
               {"h_F": state.h_F},
               {"psi_plus": state.psi_plus, "psi_minus": state.psi_minus, "psi_F": state.psi_F})
    return path, fpath


def interface_comparison(blocks: BlockSystem, state: FiveFieldState, degree: int = 4) -> dict:
    """Per fracture triangle: P0 interface values, averaged traces and the
    local contribution to J."""
    m2 = blocks.mesh2d
    area = m2.areas()
    ints = interface_integrals(blocks, state, degree)
    cen = m2.vertices[m2.triangles].mean(axis=1)
    return {
        "tri": np.arange(m2.n_triangles), "x_F": cen[:, 0], "y_F": cen[:, 1], "area": area,
        "psi_plus": state.psi_plus, "trace_plus": ints["h_plus"] / area,
        "psi_minus": state.psi_minus, "trace_minus": ints["h_minus"] / area,
        "psi_F": state.psi_F, "h_F": ints["h_F"] / area,
        "local_J": ints["local_J"],
    }


def export_interface_comparison(path, blocks: BlockSystem, state: FiveFieldState) -> dict:
    table = interface_comparison(blocks, state)
    cols = list(table)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i in range(len(table["tri"])):
            w.writerow([str(table[c][i]) if c == "tri" else FMT.format(table[c][i]) for c in cols])
    return table
