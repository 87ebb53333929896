"""Sparse blocks of the five-field problem.

Field ordering is ``[h_D, h_F, psi_plus, psi_minus, psi_F]``. Matrices are
assembled on the full DOF sets; :func:`eliminate_dirichlet` removes the
constrained DOFs and produces the algebraic problem used by the solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from .cutting import CutClassification, InterfacePieces, split_tet_by_plane, split_tets_by_plane
from .mesh import FractureGeometry, GeometryError, Mesh2D, Mesh3D
from .quadrature import map_tets, map_triangles, quadrature
from .xfem import XFEMSpace

Field = Union[float, Callable]

CHUNK = 4000


@dataclass(frozen=True)
class MaterialFields:
    """Material data.

    `K_D` is a scalar or SPD 3x3 tensor. `K_F` and `eta` are scalars or
    callables of fracture-frame points (m, 2); `K_F` may return scalars (m,)
    or tensors (m, 2, 2). `g` is ``None`` or a callable ``g(x, side)`` of
    points (m, 3) and the side (+1/-1) of each point.
    """

    K_D: Union[float, np.ndarray] = 1.0
    K_F: Field = 1.0
    eta: Field = 1.0
    g: Optional[Callable] = None

    def K_D_tensor(self) -> np.ndarray:
        K = np.asarray(self.K_D, dtype=float)
        return K * np.eye(3) if K.ndim == 0 else K

    def eta_at(self, xf: np.ndarray) -> np.ndarray:
        val = self.eta(xf) if callable(self.eta) else np.full(len(xf), float(self.eta))
        val = np.asarray(val, dtype=float)
        if np.any(val <= 0):
            raise ValueError("eta must be strictly positive")
        return val

    def K_F_at(self, xf: np.ndarray) -> np.ndarray:
        val = self.K_F(xf) if callable(self.K_F) else np.full(len(xf), float(self.K_F))
        val = np.asarray(val, dtype=float)
        if val.ndim == 1:
            val = val[:, None, None] * np.eye(2)
        return val


@dataclass
class BlockSystem:
    """All sparse blocks on the full (unconstrained) DOF sets."""

    A_D: sp.csr_matrix
    A_F: sp.csr_matrix
    B_plus: sp.csr_matrix
    B_minus: sp.csr_matrix
    B_F: sp.csr_matrix
    E_plus: sp.csr_matrix
    E_minus: sp.csr_matrix
    E_F: sp.csr_matrix
    G_D: sp.csr_matrix
    G_F: sp.csr_matrix
    G_psi_plus: sp.csr_matrix
    G_psi_minus: sp.csr_matrix
    G_psi_F: sp.csr_matrix
    rhs_g: np.ndarray
    space: XFEMSpace
    mesh2d: Mesh2D
    materials: MaterialFields
    pieces: InterfacePieces
    eta_weighted_cross: bool = False

    @property
    def dofmap(self):
        return self.space.dofmap

    def G_h(self) -> sp.csr_matrix:
        return sp.block_diag([self.G_D, self.G_F], format="csr")

    def G_psi(self) -> sp.csr_matrix:
        return sp.block_diag([self.G_psi_plus, self.G_psi_minus, self.G_psi_F], format="csr")

    def E(self) -> sp.csr_matrix:
        nD, nF = self.A_D.shape[0], self.A_F.shape[0]
        m = self.G_psi_plus.shape[0]
        return sp.bmat([
            [self.E_plus, self.E_minus, sp.csr_matrix((nD, m))],
            [sp.csr_matrix((nF, m)), sp.csr_matrix((nF, m)), self.E_F],
        ], format="csr")

    def G(self) -> sp.csr_matrix:
        """Full functional matrix in the layout of the five fields."""
        E = self.E()
        return sp.bmat([[self.G_h(), E], [E.T, self.G_psi()]], format="csr")

    def dump(self, directory) -> None:
        """Write every block as ``row col value`` text, one file per block."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        names = ["A_D", "A_F", "B_plus", "B_minus", "B_F", "E_plus", "E_minus", "E_F",
                 "G_D", "G_F", "G_psi_plus", "G_psi_minus", "G_psi_F"]
        for name in names:
            M = getattr(self, name).tocoo()
            with open(out / f"{name}.coo", "w") as fh:
                fh.write(f"# {M.shape[0]} {M.shape[1]} {M.nnz}\n")
                for r, c, v in zip(M.row, M.col, M.data):
                    fh.write(f"{r} {c} {v:.17g}\n")
        np.savetxt(out / "rhs_g.txt", self.rhs_g, fmt="%.17g")


def _scatter(rows, cols, data, shape):
    M = sp.coo_matrix((data.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()
    M.sum_duplicates()
    M.eliminate_zeros()
    return M


def _cell_side(dist_t: np.ndarray) -> int:
    return 1 if np.any(dist_t > 0) else -1


def volume_cells(space: XFEMSpace):
    """Integration cells for tetrahedra carrying enriched DOFs.

    Cut tetrahedra are split by the fracture plane; tetrahedra touching a
    bubble-enriched vertex are further split by the planes through the
    fracture edges orthogonal to the fracture, so quadrature points
    never sit on a kink of the bubble.

    Returns (coords (n, 4, 3), parent (n,), side (n,)).
    """
    mesh, cut, frac = space.mesh, space.cut, space.frac
    bubble = set(space.bubble_support.tolist())
    edge_planes = []
    for a, b, c in frac.edge_lines():
        n3 = a * frac.u + b * frac.v
        edge_planes.append((n3, float(n3 @ frac.origin - c)))
    tol = 1e-12 * np.linalg.norm(np.ptp(mesh.vertices, axis=0))

    coords, parent, side = [], [], []
    for t in space.support:
        d = cut.distance[mesh.tets[t]]
        if t in cut.subtets:
            parts = cut.subtets[t]
        elif np.any(d > 0) and np.any(d < 0):
            parts = split_tet_by_plane(mesh.vertices[mesh.tets[t]], d)
        else:
            s = _cell_side(d)
            whole = mesh.vertices[mesh.tets[t]][None]
            parts = (whole, np.zeros((0, 4, 3))) if s > 0 else (np.zeros((0, 4, 3)), whole)
        for s, cells in ((1, parts[0]), (-1, parts[1])):
            if t in bubble:
                for n3, off in edge_planes:
                    p, m = split_tets_by_plane(cells, n3, off, tol)
                    cells = np.concatenate([p, m])
            coords.extend(cells)
            parent.extend([t] * len(cells))
            side.extend([s] * len(cells))
    return np.array(coords).reshape(-1, 4, 3), np.array(parent, dtype=int), np.array(side, dtype=float)


def assemble_volume(space: XFEMSpace, mat: MaterialFields):
    """Stiffness part of A_D and the source vector g."""
    mesh = space.mesh
    N = space.n_dofs
    K = mat.K_D_tensor()
    plain = np.setdiff1d(np.arange(mesh.n_tets), space.support)

    gl = space.grad_lambda[plain]
    Ke = space.volumes[plain, None, None] * np.einsum("nid,de,nje->nij", gl, K, gl)
    t4 = mesh.tets[plain]
    rows = [np.repeat(t4, 4, axis=1).ravel()]
    cols = [np.tile(t4, (1, 4)).ravel()]
    data = [Ke.ravel()]
    rhs = np.zeros(N)

    if mat.g is not None and len(plain):
        rule = quadrature("tet", 4)
        for s in range(0, len(plain), CHUNK):
            idx = plain[s : s + CHUNK]
            pts, w = map_tets(mesh.vertices[mesh.tets[idx]], rule)
            nq = pts.shape[1]
            sides = np.repeat(np.where(space.cut.distance[mesh.tets[idx]].max(axis=1) > 0, 1.0, -1.0), nq)
            gv = mat.g(pts.reshape(-1, 3), sides).reshape(-1, nq)
            lam = rule.barycentric()
            np.add.at(rhs, mesh.tets[idx], np.einsum("nq,qi->ni", w * gv, lam))

    cells, parent, side = volume_cells(space)
    bubble = np.isin(parent, space.bubble_support)
    for flag in (False, True):
        sel = np.flatnonzero(bubble == flag)
        if len(sel) == 0:
            continue
        deg = 5 if flag else (4 if mat.g is not None else 2)
        rule = quadrature("tet", deg)
        for s in range(0, len(sel), CHUNK):
            idx = sel[s : s + CHUNK]
            pts, w = map_tets(cells[idx], rule)
            nc, nq = w.shape
            par = np.repeat(parent[idx], nq)
            sd = np.repeat(side[idx], nq)
            vals, grads = space.basis(par, pts.reshape(-1, 3), sd)
            dofs, mask = space.local_dofs(parent[idx])
            KG = np.einsum("nid,de,nje->nij", grads, K, grads) * w.reshape(-1)[:, None, None]
            Kc = KG.reshape(nc, nq, 8, 8).sum(axis=1)
            m2 = mask[:, :, None] & mask[:, None, :]
            rows.append(np.repeat(dofs, 8, axis=1).ravel())
            cols.append(np.tile(dofs, (1, 8)).ravel())
            data.append(np.where(m2, Kc, 0.0).ravel())
            if mat.g is not None:
                gv = mat.g(pts.reshape(-1, 3), sd) * w.reshape(-1)
                fc = (vals * gv[:, None]).reshape(nc, nq, 8).sum(axis=1)
                np.add.at(rhs, dofs[mask], fc[mask])

    A = _scatter(np.concatenate(rows), np.concatenate(cols), np.concatenate(data), (N, N))
    return A, rhs


def assemble_interface(space: XFEMSpace, mesh2d: Mesh2D, pieces: InterfacePieces, mat: MaterialFields,
                       eta_weighted_cross: bool = False):
    """Mixed-mesh integrals over the cross-section / fracture-triangle tiling.

    Returns ``(A_omega, G_D, E_plus, E_minus, B_F)`` where ``A_omega`` is the
    sided eta-mass added to A_D.
    """
    N = space.n_dofs
    M = mesh2d.n_triangles
    frac = space.frac
    rows, cols, a_data, g_data = [], [], [], []
    e_rows, e_cols = [], []
    e_data = {1: [], -1: []}
    b_data = []

    bubble = np.isin(pieces.tet, space.bubble_support)
    for flag in (False, True):
        sel = np.flatnonzero(bubble == flag)
        if len(sel) == 0:
            continue
        rule = quadrature("triangle", 5 if flag else 2)
        for s in range(0, len(sel), CHUNK):
            idx = sel[s : s + CHUNK]
            xf, w = map_triangles(pieces.triangles[idx], rule)
            n, nq = w.shape
            xf = xf.reshape(-1, 2)
            x3 = frac.to_global(xf)
            eta = mat.eta_at(xf)
            par = np.repeat(pieces.tet[idx], nq)
            dofs, mask = space.local_dofs(pieces.tet[idx])
            m2 = mask[:, :, None] & mask[:, None, :]
            wf = w.reshape(-1)
            Gl = np.zeros((n, 8, 8))
            Al = np.zeros((n, 8, 8))
            Bl = np.zeros((n, 8))
            for sgn in (1, -1):
                vals, _ = space.basis(par, x3, np.full(len(par), float(sgn)), grad=False)
                outer = vals[:, :, None] * vals[:, None, :]
                Gl += (outer * wf[:, None, None]).reshape(n, nq, 8, 8).sum(axis=1)
                Al += (outer * (wf * eta)[:, None, None]).reshape(n, nq, 8, 8).sum(axis=1)
                Bl += (vals * (wf * eta)[:, None]).reshape(n, nq, 8).sum(axis=1)
                ew = wf * eta if eta_weighted_cross else wf
                e_data[sgn].append(np.where(mask, -(vals * ew[:, None]).reshape(n, nq, 8).sum(axis=1), 0.0).ravel())
            rows.append(np.repeat(dofs, 8, axis=1).ravel())
            cols.append(np.tile(dofs, (1, 8)).ravel())
            g_data.append(np.where(m2, Gl, 0.0).ravel())
            a_data.append(np.where(m2, Al, 0.0).ravel())
            e_rows.append(dofs.ravel())
            e_cols.append(np.repeat(pieces.tri[idx], 8))
            b_data.append(np.where(mask, Bl, 0.0).ravel())

    if not rows:
        z = sp.csr_matrix((N, N))
        zm = sp.csr_matrix((N, M))
        return z, z.copy(), zm, zm.copy(), zm.copy()
    r, c = np.concatenate(rows), np.concatenate(cols)
    er, ec = np.concatenate(e_rows), np.concatenate(e_cols)
    A_om = _scatter(r, c, np.concatenate(a_data), (N, N))
    G_D = _scatter(r, c, np.concatenate(g_data), (N, N))
    E_p = _scatter(er, ec, np.concatenate(e_data[1]), (N, M))
    E_m = _scatter(er, ec, np.concatenate(e_data[-1]), (N, M))
    B_F = _scatter(er, ec, np.concatenate(b_data), (N, M))
    return A_om, G_D, E_p, E_m, B_F


def assemble_fracture(mesh2d: Mesh2D, mat: MaterialFields, eta_weighted_cross: bool = False):
    """Blocks living on the fracture mesh only.

    Returns ``(A_F, G_F, B_plus, B_minus, E_F, G_psi)``.
    """
    nF, M = mesh2d.n_vertices, mesh2d.n_triangles
    tri = mesh2d.triangles
    xy = mesh2d.vertices[tri]
    rule = quadrature("triangle", 2)
    pts, w = map_triangles(xy, rule)
    nq = w.shape[1]
    flat = pts.reshape(-1, 2)
    eta = mat.eta_at(flat).reshape(-1, nq)
    KF = mat.K_F_at(flat).reshape(-1, nq, 2, 2)
    lam = rule.barycentric()

    e1, e2 = xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    Jinv = np.stack([np.stack([e2[:, 1], -e2[:, 0]], 1), np.stack([-e1[:, 1], e1[:, 0]], 1)], 1) / det[:, None, None]
    grad = np.concatenate([-Jinv.sum(axis=1, keepdims=True), Jinv], axis=1)

    Kbar = np.einsum("nq,nqde->nde", w, KF)
    stiff = np.einsum("nid,nde,nje->nij", grad, Kbar, grad)
    mass_eta = np.einsum("nq,qi,qj->nij", w * eta, lam, lam)
    mass = np.einsum("nq,qi,qj->nij", w, lam, lam)
    r = np.repeat(tri, 3, axis=1).ravel()
    c = np.tile(tri, (1, 3)).ravel()
    A_F = _scatter(r, c, (stiff + 2.0 * mass_eta).ravel(), (nF, nF))
    G_F = _scatter(r, c, mass.ravel(), (nF, nF))

    cols = np.repeat(np.arange(M), 3)
    bvals = np.einsum("nq,qi->ni", w * eta, lam)
    evals = np.einsum("nq,qi->ni", w * eta if eta_weighted_cross else w, lam)
    B = _scatter(tri.ravel(), cols, bvals.ravel(), (nF, M))
    E_F = _scatter(tri.ravel(), cols, -evals.ravel(), (nF, M))
    G_psi = sp.diags(mesh2d.areas()).tocsr()
    return A_F, G_F, B, B.copy(), E_F, G_psi


def assemble_blocks(space: XFEMSpace, mesh2d: Mesh2D, pieces: InterfacePieces, mat: MaterialFields,
                    eta_weighted_cross: bool = False, check_tiling: bool = True) -> BlockSystem:
    """Assemble every block of the discrete problem.

    Raises
    ------
    GeometryError
        If the interface tiling does not cover the fracture mesh.
    """
    if check_tiling and len(pieces.tet):
        e1 = pieces.triangles[:, 1] - pieces.triangles[:, 0]
        e2 = pieces.triangles[:, 2] - pieces.triangles[:, 0]
        covered = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]).sum()
        total = mesh2d.areas().sum()
        if abs(covered - total) > 1e-8 * total:
            raise GeometryError(f"interface tiling covers {covered:.12g} of fracture area {total:.12g}")
    A_vol, rhs = assemble_volume(space, mat)
    A_om, G_D, E_p, E_m, B_F = assemble_interface(space, mesh2d, pieces, mat, eta_weighted_cross)
    A_F, G_F, B_p, B_m, E_F, G_psi = assemble_fracture(mesh2d, mat, eta_weighted_cross)
    return BlockSystem(
        A_D=(A_vol + A_om).tocsr(), A_F=A_F, B_plus=B_p, B_minus=B_m, B_F=B_F,
        E_plus=E_p, E_minus=E_m, E_F=E_F, G_D=G_D, G_F=G_F,
        G_psi_plus=G_psi, G_psi_minus=G_psi.copy(), G_psi_F=G_psi.copy(),
        rhs_g=rhs, space=space, mesh2d=mesh2d, materials=mat, pieces=pieces,
        eta_weighted_cross=eta_weighted_cross,
    )


@dataclass
class ReducedSystem:
    """Algebraic problem on the free DOFs.

    Minimize ``x^T G x + 2 x^T q + r`` over ``x = [h; psi]`` subject to
    ``A h = B psi + b`` with ``A = diag(A_D, A_F)``,
    ``B = [[0, 0, B_F], [B_plus, B_minus, 0]]``.
    """

    A_D: sp.csr_matrix
    A_F: sp.csr_matrix
    B_F: sp.csr_matrix
    B_plus: sp.csr_matrix
    B_minus: sp.csr_matrix
    G_h: sp.csr_matrix
    E: sp.csr_matrix
    G_psi: sp.csr_matrix
    b_D: np.ndarray
    b_F: np.ndarray
    q_h: np.ndarray
    q_psi: np.ndarray
    r: float
    free_3d: np.ndarray
    free_2d: np.ndarray
    lift_3d: np.ndarray
    lift_2d: np.ndarray
    M_sizes: tuple = field(default=(0, 0, 0))

    @property
    def n_D(self) -> int:
        return self.A_D.shape[0]

    @property
    def n_F(self) -> int:
        return self.A_F.shape[0]

    @property
    def n_psi(self) -> int:
        return self.G_psi.shape[0]

    def B(self) -> sp.csr_matrix:
        m = self.M_sizes
        return sp.bmat([
            [sp.csr_matrix((self.n_D, m[0])), sp.csr_matrix((self.n_D, m[1])), self.B_F],
            [self.B_plus, self.B_minus, sp.csr_matrix((self.n_F, m[2]))],
        ], format="csr")

    def b(self) -> np.ndarray:
        return np.concatenate([self.b_D, self.b_F])

    def expand(self, h_free: np.ndarray):
        """Full 3D and fracture coefficient arrays from free values."""
        hD = self.lift_3d.copy()
        hD[self.free_3d] = h_free[: self.n_D]
        hF = self.lift_2d.copy()
        hF[self.free_2d] = h_free[self.n_D :]
        return hD, hF


def eliminate_dirichlet(blocks: BlockSystem) -> ReducedSystem:
    """Remove constrained DOFs, moving their contributions to the right-hand
    sides and to the linear and constant terms of the functional."""
    dm = blocks.dofmap
    f3, f2 = dm.free_3d, dm.free_2d
    c3, c2 = dm.dirichlet_3d, dm.dirichlet_2d
    lift3 = np.zeros(dm.N_D)
    lift3[c3] = dm.dirichlet_3d_values
    lift2 = np.zeros(dm.N_F)
    lift2[c2] = dm.dirichlet_2d_values

    A_D = blocks.A_D[f3][:, f3].tocsr()
    A_F = blocks.A_F[f2][:, f2].tocsr()
    b_D = blocks.rhs_g[f3] - blocks.A_D[f3] @ lift3
    b_F = -(blocks.A_F[f2] @ lift2)

    G_D = blocks.G_D
    G_F = blocks.G_F
    G_h = sp.block_diag([G_D[f3][:, f3], G_F[f2][:, f2]], format="csr")
    q_h = np.concatenate([G_D[f3] @ lift3, G_F[f2] @ lift2])
    E = blocks.E()
    fr = np.concatenate([f3, dm.N_D + f2])
    lift = np.concatenate([lift3, lift2])
    q_psi = E.T @ lift
    r = float(lift3 @ (G_D @ lift3) + lift2 @ (G_F @ lift2))

    return ReducedSystem(
        A_D=A_D, A_F=A_F,
        B_F=blocks.B_F[f3].tocsr(), B_plus=blocks.B_plus[f2].tocsr(), B_minus=blocks.B_minus[f2].tocsr(),
        G_h=G_h, E=E[fr].tocsr(), G_psi=blocks.G_psi(),
        b_D=b_D, b_F=b_F, q_h=q_h, q_psi=q_psi, r=r,
        free_3d=f3, free_2d=f2, lift_3d=lift3, lift_2d=lift2,
        M_sizes=(dm.M_plus, dm.M_minus, dm.M_F),
    )


def assemble_constraint_C(red: ReducedSystem):
    """Constraint matrix ``C = [A -B]`` over ``[h; psi]`` and its right-hand side."""
    A = sp.block_diag([red.A_D, red.A_F], format="csr")
    C = sp.hstack([A, -red.B()], format="csr")
    return C, red.b()
