"""Enriched P1 space on the tetrahedral mesh.

The matrix pressure is a P1 Lagrange field plus shifted enrichments:
a Heaviside jump ``H(x)`` for vertices of fully cut elements and the product
``H(x) E(x)`` for vertices of elements crossed by interior fracture edges,
where ``E`` is an edge bubble that vanishes on the interior edges of the
fracture. Each enrichment is multiplied by the vertex hat function and
shifted by its nodal value so it vanishes at every mesh vertex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cutting import CutClassification
from .mesh import BoxDomain, Dirichlet, FractureGeometry, Mesh2D, Mesh3D

NONE, HEAVISIDE, BUBBLE = 0, 1, 2


@dataclass(frozen=True)
class EnrichmentSpec:
    """Edge-bubble parameters: scaling `sigma`, exponent `varsigma`, and the
    interior edge lines as rows ``(a, b, c)`` with ``eps = a x_F + b y_F + c``."""

    sigma: float
    varsigma: float
    lines: np.ndarray

    @classmethod
    def from_fracture(cls, frac: FractureGeometry, varsigma: float = 0.5) -> "EnrichmentSpec":
        lines = frac.interior_lines()
        bc = frac.barycenter
        prod = np.prod(lines[:, :2] @ bc + lines[:, 2]) if len(lines) else 1.0
        if prod <= 0:
            raise ValueError("fracture barycenter must lie strictly inside the interior edges")
        return cls(float(1.0 / prod**varsigma), float(varsigma), lines)


def heaviside(x: np.ndarray, frac: FractureGeometry, tol: float = 0.0) -> np.ndarray:
    """``sign(n . (x - x0))``; points on the plane are rejected."""
    d = frac.signed_distance(x)
    if np.any(np.abs(d) <= tol):
        raise ValueError("Heaviside enrichment is undefined on the fracture plane")
    return np.where(d > 0, 1, -1)


def edge_bubble(x: np.ndarray, spec: EnrichmentSpec, frac: FractureGeometry):
    """Edge bubble value and 3D gradient at points `x` of shape (m, 3).

    The bubble is extruded along the fracture normal: it depends on the
    in-plane projection only, and is zero where the projection falls outside
    the fracture polygon.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xf = frac.to_local(x)
    inside = frac.contains(xf)
    val = np.zeros(len(x))
    grad2 = np.zeros((len(x), 2))
    if len(spec.lines) == 0:
        val[inside] = spec.sigma
        return val, np.zeros((len(x), 3))
    eps = xf[inside] @ spec.lines[:, :2].T + spec.lines[:, 2]
    eps = np.maximum(eps, 0.0)
    v = spec.sigma * np.prod(eps**spec.varsigma, axis=1)
    val[inside] = v
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(eps > 0, spec.varsigma / eps, 0.0)
    grad2[inside] = v[:, None] * (w @ spec.lines[:, :2])
    grad3 = grad2[:, :1] * frac.u + grad2[:, 1:] * frac.v
    return val, grad3


@dataclass(frozen=True)
class DofMap:
    """Numbering of the five fields.

    Standard 3D DOFs coincide with vertex ids. Enriched DOFs follow: first the
    bubble-enriched vertices (``enriched_E``), then the Heaviside-only ones
    (``enriched_H``). ``enr_dof[v]`` is the enriched DOF of vertex ``v`` or -1
    and ``enr_kind[v]`` its enrichment type. Interface fields use one P0 value
    per fracture triangle.
    """

    n_std: int
    enriched_E: np.ndarray
    enriched_H: np.ndarray
    enr_dof: np.ndarray
    enr_kind: np.ndarray
    N_D: int
    N_F: int
    M_plus: int
    M_minus: int
    M_F: int
    dirichlet_3d: np.ndarray
    dirichlet_3d_values: np.ndarray
    dirichlet_2d: np.ndarray
    dirichlet_2d_values: np.ndarray

    @property
    def free_3d(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.N_D), self.dirichlet_3d)

    @property
    def free_2d(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.N_F), self.dirichlet_2d)

    @property
    def M(self) -> int:
        return self.M_plus + self.M_minus + self.M_F


def build_dof_map(mesh3d: Mesh3D, mesh2d: Mesh2D, cut: CutClassification, box: BoxDomain,
                  frac: FractureGeometry) -> DofMap:
    nv = mesh3d.n_vertices
    I_E = np.unique(mesh3d.tets[cut.edge_tets].ravel()) if len(cut.edge_tets) else np.zeros(0, int)
    I_H = np.unique(mesh3d.tets[cut.cut_tets].ravel()) if len(cut.cut_tets) else np.zeros(0, int)
    H_only = np.setdiff1d(I_H, I_E)

    enr_dof = np.full(nv, -1, dtype=int)
    enr_kind = np.zeros(nv, dtype=np.int8)
    enr_dof[I_E] = nv + np.arange(len(I_E))
    enr_kind[I_E] = BUBBLE
    enr_dof[H_only] = nv + len(I_E) + np.arange(len(H_only))
    enr_kind[H_only] = HEAVISIDE
    N_D = nv + len(I_E) + len(H_only)

    fixed: dict = {}
    for face in ("x-", "x+", "y-", "y+", "z-", "z+"):
        bc = box.boundary_tags[face]
        if not isinstance(bc, Dirichlet):
            continue
        verts = np.unique(mesh3d.boundary_faces[mesh3d.boundary_tags == face].ravel())
        verts = np.array([v for v in verts if v not in fixed], dtype=int)
        if len(verts) == 0:
            continue
        for v, val in zip(verts, bc.evaluate(mesh3d.vertices[verts])):
            fixed[int(v)] = float(val)
    for v in list(fixed):
        if enr_dof[v] >= 0:
            fixed[int(enr_dof[v])] = 0.0
    d3 = np.array(sorted(fixed), dtype=int)
    v3 = np.array([fixed[k] for k in d3], dtype=float)

    fixed2: dict = {}
    for edge_id, bc in sorted(frac.boundary_tags.items()):
        if not isinstance(bc, Dirichlet):
            continue
        sel = np.array([int(t) == int(edge_id) for t in mesh2d.boundary_tags], dtype=bool)
        verts = np.unique(mesh2d.boundary_edges[sel].ravel())
        for v, val in zip(verts, bc.evaluate(mesh2d.vertices[verts])):
            fixed2.setdefault(int(v), float(val))
    d2 = np.array(sorted(fixed2), dtype=int)
    v2 = np.array([fixed2[k] for k in d2], dtype=float)

    m = mesh2d.n_triangles
    return DofMap(nv, I_E, H_only, enr_dof, enr_kind, N_D, mesh2d.n_vertices, m, m, m, d3, v3, d2, v2)


class XFEMSpace:
    """Evaluation of the enriched basis on the tetrahedral mesh.

    Every tetrahedron carries 8 local slots: the 4 vertex hat functions and
    the 4 (possibly absent) vertex enrichments. Absent slots have zero basis
    values and point at DOF 0.
    """

    def __init__(self, mesh: Mesh3D, frac: FractureGeometry, cut: CutClassification, dofmap: DofMap,
                 spec: EnrichmentSpec):
        self.mesh = mesh
        self.frac = frac
        self.cut = cut
        self.dofmap = dofmap
        self.spec = spec
        coords = mesh.vertices[mesh.tets]
        J = np.stack([coords[:, 1] - coords[:, 0], coords[:, 2] - coords[:, 0], coords[:, 3] - coords[:, 0]], axis=2)
        self._Jinv = np.linalg.inv(J)
        # rows of J^-1 are the gradients of lambda_1..3
        g = self._Jinv
        self.grad_lambda = np.concatenate([-g.sum(axis=1, keepdims=True), g], axis=1)
        self.volumes = np.abs(np.linalg.det(J)) / 6.0
        self.vertex_E = edge_bubble(mesh.vertices, spec, frac)[0]
        self.vertex_H = cut.vertex_side.astype(float)
        tv = dofmap.enr_kind[mesh.tets]
        self.support = np.flatnonzero((tv != NONE).any(axis=1))
        self.bubble_support = np.flatnonzero((tv == BUBBLE).any(axis=1))
        self._tree = None

    @property
    def n_dofs(self) -> int:
        return self.dofmap.N_D

    def local_dofs(self, tets: np.ndarray):
        """(n, 8) DOF ids and (n, 8) boolean mask of active slots."""
        verts = self.mesh.tets[tets]
        enr = self.dofmap.enr_dof[verts]
        dofs = np.concatenate([verts, np.maximum(enr, 0)], axis=1)
        mask = np.concatenate([np.ones_like(verts, dtype=bool), enr >= 0], axis=1)
        return dofs, mask

    def barycentric(self, tets: np.ndarray, points: np.ndarray) -> np.ndarray:
        x0 = self.mesh.vertices[self.mesh.tets[tets, 0]]
        lam = np.einsum("nij,nj->ni", self._Jinv[tets], points - x0)
        return np.column_stack([1.0 - lam.sum(axis=1), lam])

    def basis(self, tets: np.ndarray, points: np.ndarray, side: np.ndarray, grad: bool = True):
        """Basis values (n, 8) and gradients (n, 8, 3) at one point per entry.

        `side` gives the Heaviside value (+1/-1) used at each point, so
        one-sided traces on the fracture plane are obtained by forcing it.
        """
        tets = np.asarray(tets)
        side = np.broadcast_to(np.asarray(side, dtype=float), (len(tets),))
        lam = self.barycentric(tets, points)
        verts = self.mesh.tets[tets]
        kind = self.dofmap.enr_kind[verts]
        Hk = self.vertex_H[verts]
        Ek = self.vertex_E[verts]

        shift = np.zeros_like(lam)
        hk_mask = kind == HEAVISIDE
        shift = np.where(hk_mask, side[:, None] - Hk, shift)
        dE = None
        if np.any(kind == BUBBLE):
            E, dE = edge_bubble(points, self.spec, self.frac)
            shift = np.where(kind == BUBBLE, side[:, None] * E[:, None] - Hk * Ek, shift)
        values = np.concatenate([lam, lam * shift], axis=1)
        if not grad:
            return values, None
        gl = self.grad_lambda[tets]
        genr = gl * shift[:, :, None]
        if dE is not None:
            bub = (kind == BUBBLE)[:, :, None]
            genr = genr + np.where(bub, lam[:, :, None] * side[:, None, None] * dE[:, None, :], 0.0)
        return values, np.concatenate([gl, genr], axis=1)

    def locate(self, points: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        """Index of a tetrahedron containing each point (-1 if none)."""
        points = np.atleast_2d(points)
        if self._tree is None:
            self._tree = cKDTree(self.mesh.vertices[self.mesh.tets].mean(axis=1))
        k = min(32, self.mesh.n_tets)
        _, cand = self._tree.query(points, k=k)
        cand = np.atleast_2d(cand).reshape(len(points), -1)
        found = np.full(len(points), -1, dtype=int)
        for j in range(cand.shape[1]):
            todo = found < 0
            if not todo.any():
                break
            t = cand[todo, j]
            lam = self.barycentric(t, points[todo])
            ok = lam.min(axis=1) >= -tol
            idx = np.flatnonzero(todo)[ok]
            found[idx] = t[ok]
        for i in np.flatnonzero(found < 0):
            lam = self.barycentric(np.arange(self.mesh.n_tets), np.repeat(points[i : i + 1], self.mesh.n_tets, 0))
            hit = np.flatnonzero(lam.min(axis=1) >= -tol)
            if len(hit):
                found[i] = hit[0]
        return found

    def evaluate(self, coeffs: np.ndarray, points: np.ndarray, side=None, tets=None, grad: bool = True):
        """Value and gradient of the enriched field at points.

        `side` may be ``None`` (taken from the point's position, which must
        not lie on the fracture plane), a scalar +1/-1, or an array. Raises
        ``ValueError`` for points outside the mesh.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if tets is None:
            tets = self.locate(points)
        if np.any(tets < 0):
            raise ValueError("point outside the mesh")
        if side is None:
            d = self.frac.signed_distance(points)
            scale = np.linalg.norm(np.ptp(self.mesh.vertices, axis=0))
            on = np.abs(d) <= 1e-12 * scale
            if np.any(on & self._needs_side(tets)):
                raise ValueError("side must be given for points on the fracture plane")
            side = np.where(d >= 0, 1.0, -1.0)
        side = np.broadcast_to(np.asarray(side, dtype=float), (len(points),))
        dofs, mask = self.local_dofs(tets)
        vals, grads = self.basis(tets, points, side, grad=grad)
        c = np.where(mask, coeffs[dofs], 0.0)
        value = np.einsum("ni,ni->n", vals, c)
        if not grad:
            return value, None
        return value, np.einsum("nid,ni->nd", grads, c)

    def _needs_side(self, tets):
        return (self.dofmap.enr_kind[self.mesh.tets[tets]] != NONE).any(axis=1)
