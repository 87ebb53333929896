"""Equi-dimensional 2D reference solutions.

The fracture is represented as a strip of width `d` inside a rectangle and
the pressure solves ``-div(K grad u) = 0`` with P1 elements on a graded,
strip-conforming tensor-product grid (each cell split into two triangles).
Inside the strip the conductivity is diagonal with tangential value
``K_F / d`` and normal value ``eta * d``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla


class MeshGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Strip:
    """Axis-aligned strip.

    `normal_axis` is 0 (strip across x) or 1 (strip across y); the strip is
    ``|coord[normal_axis] - center| < width / 2`` restricted to
    ``t_range`` along the other axis. `k_t` and `k_n` map tangential
    coordinates to tangential and normal conductivities.
    """

    normal_axis: int
    center: float
    width: float
    t_range: tuple
    k_t: Callable
    k_n: Callable
    breakpoints: tuple = ()


@dataclass(frozen=True)
class EquiDim2DCase:
    lo: tuple
    hi: tuple
    strip: Strip
    K: float = 1.0
    dirichlet: dict = field(default_factory=dict)
    h_strip: Optional[float] = None
    h_out: float = 1e-2
    grading: float = 1.15

    def __post_init__(self):
        s = self.strip
        if s.width <= 0:
            raise ValueError("strip width must be positive")
        a = s.normal_axis
        if not (self.lo[a] < s.center - s.width / 2 and s.center + s.width / 2 < self.hi[a]):
            raise ValueError("strip must lie inside the rectangle")
        if not self.dirichlet:
            raise ValueError("at least one Dirichlet side is required")


def graded_axis(lo: float, hi: float, fine: Sequence[tuple], h_out: float, ratio: float) -> np.ndarray:
    """1D grid on [lo, hi] refined around the `fine` entries.

    Each entry ``(a, b, h)`` is an interval (or a point when ``a == b``)
    whose endpoints become nodes and where the spacing is at most `h`. Away
    from them the spacing grows roughly geometrically by `ratio`, capped at
    `h_out`.
    """
    def size(x):
        h = h_out
        for a, b, hf in fine:
            h = min(h, hf + (ratio - 1.0) * max(a - x, x - b, 0.0))
        return h

    fixed = sorted({lo, hi, *(a for a, _, _ in fine if lo < a < hi), *(b for _, b, _ in fine if lo < b < hi)})
    nodes = [np.array([lo])]
    for x0, x1 in zip(fixed[:-1], fixed[1:]):
        pts = [x0]
        while pts[-1] < x1 - 1e-12 * (hi - lo):
            # step with the smaller of the sizes at both ends of the step
            h = size(pts[-1])
            pts.append(pts[-1] + min(h, size(pts[-1] + h)))
        p = np.array(pts)
        if len(p) > 2 and (p[-1] - x1) > 0.5 * (p[-1] - p[-2]):
            p = np.delete(p, -2)
        p = x0 + (p - x0) * (x1 - x0) / (p[-1] - x0)
        nodes.append(p[1:])
    x = np.concatenate(nodes)
    if np.any(np.diff(x) <= 0):
        raise MeshGenerationError("non-monotone 1D grid")
    return x


@dataclass
class ReferenceSolution:
    """Nodal P1 field on a tensor grid; cells split along the (0,0)-(1,1) diagonal."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.values.size

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Exact P1 interpolation at points (m, 2).

        Raises
        ------
        ValueError
            For points outside the rectangle.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        tol = 1e-12 * max(self.x[-1] - self.x[0], self.y[-1] - self.y[0])
        if np.any((p[:, 0] < self.x[0] - tol) | (p[:, 0] > self.x[-1] + tol)
                  | (p[:, 1] < self.y[0] - tol) | (p[:, 1] > self.y[-1] + tol)):
            raise ValueError("sample outside the reference domain")
        i = np.clip(np.searchsorted(self.x, p[:, 0], side="right") - 1, 0, len(self.x) - 2)
        j = np.clip(np.searchsorted(self.y, p[:, 1], side="right") - 1, 0, len(self.y) - 2)
        s = np.clip((p[:, 0] - self.x[i]) / (self.x[i + 1] - self.x[i]), 0, 1)
        t = np.clip((p[:, 1] - self.y[j]) / (self.y[j + 1] - self.y[j]), 0, 1)
        v00 = self.values[i, j]
        v10 = self.values[i + 1, j]
        v01 = self.values[i, j + 1]
        v11 = self.values[i + 1, j + 1]
        lower = s >= t
        return np.where(lower, v00 + s * (v10 - v00) + t * (v11 - v10), v00 + t * (v01 - v00) + s * (v11 - v01))


def build_grid(case: EquiDim2DCase):
    s = case.strip
    a, b = s.normal_axis, 1 - s.normal_axis
    h_in = case.h_strip if case.h_strip is not None else s.width / 10
    if s.width / h_in < 2 - 1e-9:
        raise MeshGenerationError("strip needs at least two elements across its width")
    c0, c1 = s.center - s.width / 2, s.center + s.width / 2
    normal = graded_axis(case.lo[a], case.hi[a], [(c0, c1, h_in)], case.h_out, case.grading)
    t_pts = [p for p in (*s.t_range, *s.breakpoints) if case.lo[b] < p < case.hi[b]]
    tang = graded_axis(case.lo[b], case.hi[b], [(p, p, h_in) for p in t_pts], case.h_out, case.grading)
    return (normal, tang) if a == 0 else (tang, normal)


def solve_equidim_2d(case: EquiDim2DCase) -> ReferenceSolution:
    """P1 solution of the equi-dimensional problem with zero source."""
    x, y = build_grid(case)
    nx, ny = len(x), len(y)
    vid = np.arange(nx * ny).reshape(nx, ny)
    v00, v10 = vid[:-1, :-1].ravel(), vid[1:, :-1].ravel()
    v01, v11 = vid[:-1, 1:].ravel(), vid[1:, 1:].ravel()
    tris = np.concatenate([np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)])
    X, Y = np.meshgrid(x, y, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])

    xy = pts[tris]
    cen = xy.mean(axis=1)
    s = case.strip
    a, b = s.normal_axis, 1 - s.normal_axis
    in_strip = (np.abs(cen[:, a] - s.center) < s.width / 2) & (cen[:, b] > s.t_range[0]) & (cen[:, b] < s.t_range[1])
    kx = np.full(len(tris), float(case.K))
    ky = kx.copy()
    kt = np.asarray(s.k_t(cen[in_strip, b]), dtype=float) * np.ones(in_strip.sum())
    kn = np.asarray(s.k_n(cen[in_strip, b]), dtype=float) * np.ones(in_strip.sum())
    if a == 0:
        kx[in_strip], ky[in_strip] = kn, kt
    else:
        kx[in_strip], ky[in_strip] = kt, kn

    e1, e2 = xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    Jinv = np.stack([np.stack([e2[:, 1], -e2[:, 0]], 1), np.stack([-e1[:, 1], e1[:, 0]], 1)], 1) / det[:, None, None]
    grad = np.concatenate([-Jinv.sum(axis=1, keepdims=True), Jinv], axis=1)
    Kg = grad * np.stack([kx, ky], 1)[:, None, :]
    Ke = 0.5 * np.abs(det)[:, None, None] * np.einsum("nid,njd->nij", Kg, grad)
    A = sp.coo_matrix((Ke.ravel(), (np.repeat(tris, 3, 1).ravel(), np.tile(tris, (1, 3)).ravel())),
                      shape=(nx * ny, nx * ny)).tocsr()

    fixed = {}
    sides = {"x-": vid[0, :], "x+": vid[-1, :], "y-": vid[:, 0], "y+": vid[:, -1]}
    for name in ("x-", "x+", "y-", "y+"):
        if name in case.dirichlet:
            val = case.dirichlet[name]
            for v in sides[name]:
                fixed.setdefault(int(v), float(val(pts[v]) if callable(val) else val))
    c = np.array(sorted(fixed))
    u = np.zeros(nx * ny)
    u[c] = [fixed[k] for k in c]
    f = np.setdiff1d(np.arange(nx * ny), c)
    rhs = -(A[f][:, c] @ u[c])
    u[f] = sla.spsolve(A[f][:, f].tocsc(), rhs)
    return ReferenceSolution(x, y, u.reshape(nx, ny))


def line_points(segment, n_samples: int) -> np.ndarray:
    a, b = (np.asarray(p, dtype=float) for p in segment)
    t = np.linspace(0.0, 1.0, n_samples)
    return a + t[:, None] * (b - a)


def sample_on_lines(evaluate: Callable, segments, n_samples: int = 200):
    """Sample a field at equally spaced points of each segment.

    `evaluate` maps (m, dim) points to values (a :class:`ReferenceSolution`
    is accepted directly). Returns a list of ``(points, values)``.
    """
    fn = evaluate.evaluate if hasattr(evaluate, "evaluate") else evaluate
    out = []
    for seg in segments:
        p = line_points(seg, n_samples)
        out.append((p, np.asarray(fn(p), dtype=float)))
    return out


def write_line_csv(path, labels, samples, extra=None) -> None:
    """CSV with columns ``line,s,x,y,value[,extra...]``; 17 significant digits."""
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["line", "s", "x", "y", "value", *extra])
        for k, (label, (pts, vals)) in enumerate(zip(labels, samples)):
            s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
            cols = [extra[name][k] for name in extra]
            for i in range(len(vals)):
                w.writerow([label, f"{s[i]:.17g}", f"{pts[i, 0]:.17g}", f"{pts[i, 1]:.17g}", f"{vals[i]:.17g}",
                            *(f"{c[i]:.17g}" for c in cols)])
