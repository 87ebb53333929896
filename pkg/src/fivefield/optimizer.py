"""Reduced conjugate-gradient solver and the direct saddle-point oracle.

The interface unknowns ``psi = [psi_plus, psi_minus, psi_F]`` are the only
optimization variables. For each ``psi`` the pressures follow from the
block-diagonal constraint ``A h = B psi + b``, which splits into independent
3D and fracture solves.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.spatial import cKDTree

from .assembly import BlockSystem, ReducedSystem, assemble_constraint_C, eliminate_dirichlet
from .quadrature import map_triangles, quadrature


class FactorizationError(RuntimeError):
    """Inner block is not symmetric positive definite."""


class SingularSystemError(RuntimeError):
    pass


class SPDSolver:
    """Sparse LU in symmetric mode without pivoting, factored once.

    With no row pivoting the factorization is an LDL^T in disguise, so a
    non-positive pivot on the diagonal of U exposes a matrix that is not SPD.
    """

    def __init__(self, A: sp.spmatrix, residual_tol: float = 1e-12):
        A = sp.csc_matrix(A)
        self.A = A
        self.n = A.shape[0]
        self.residual_tol = residual_tol
        self.max_residual = 0.0
        if self.n == 0:
            self._lu = None
            return
        asym = abs(A - A.T).max() if A.nnz else 0.0
        if asym > 1e-12 * max(abs(A).max(), 1e-300):
            raise FactorizationError("inner block is not symmetric")
        try:
            self._lu = sla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise FactorizationError(f"factorization breakdown: {exc}") from exc
        if np.any(self._lu.U.diagonal() <= 0):
            raise FactorizationError("non-positive pivot: inner block is not positive definite")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.n == 0:
            return np.zeros(0)
        x = self._lu.solve(rhs)
        nb = np.linalg.norm(rhs)
        if nb == 0:
            return x
        res = np.linalg.norm(rhs - self.A @ x) / nb
        if res > self.residual_tol:
            x = x + self._lu.solve(rhs - self.A @ x)
            res = np.linalg.norm(rhs - self.A @ x) / nb
        self.max_residual = max(self.max_residual, res)
        return x


def inner_solve(block: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    """One-shot SPD solve; prefer :class:`SPDSolver` to reuse the factor."""
    return SPDSolver(block).solve(rhs)


@dataclass
class FiveFieldState:
    h_D: np.ndarray
    h_F: np.ndarray
    psi_plus: np.ndarray
    psi_minus: np.ndarray
    psi_F: np.ndarray

    @property
    def psi(self) -> np.ndarray:
        return np.concatenate([self.psi_plus, self.psi_minus, self.psi_F])

    def check(self, dofmap) -> None:
        sizes = (dofmap.N_D, dofmap.N_F, dofmap.M_plus, dofmap.M_minus, dofmap.M_F)
        arrays = (self.h_D, self.h_F, self.psi_plus, self.psi_minus, self.psi_F)
        for n, a in zip(sizes, arrays):
            if len(a) != n:
                raise ValueError("state length does not match the DOF map")
            if not np.all(np.isfinite(a)):
                raise ValueError("state has non-finite entries")


@dataclass
class SolveReport:
    iterations: int
    relative_residual: float
    functional_value: float
    lambda_: np.ndarray
    wall_time: float
    converged: bool
    method: str = "cg"
    residual_history: list = field(default_factory=list)
    functional_history: list = field(default_factory=list)
    inner_residual: float = 0.0

    def to_text(self, **extra) -> str:
        """Plain ``key=value`` lines."""
        items = {
            "method": self.method,
            "iterations": self.iterations,
            "relative_residual": f"{self.relative_residual:.6e}",
            "functional_value": f"{self.functional_value:.17g}",
            "converged": str(self.converged).lower(),
            "wall_time": f"{self.wall_time:.3f}",
            "inner_residual": f"{self.inner_residual:.3e}",
            "lambda_norm": f"{np.linalg.norm(self.lambda_):.17g}",
        }
        items.update({k: v for k, v in extra.items()})
        return "".join(f"{k}={v}\n" for k, v in items.items())


class FiveFieldProblem:
    """Reduced problem with factored inner blocks.

    The functional is ``J(psi) = x^T G x + 2 x^T q + r`` with
    ``x = [h(psi); psi]`` and ``h(psi) = A^{-1}(B psi + b)``.
    """

    def __init__(self, blocks: BlockSystem, reduced: Optional[ReducedSystem] = None):
        self.blocks = blocks
        self.red = reduced if reduced is not None else eliminate_dirichlet(blocks)
        r = self.red
        self.solver_D = SPDSolver(r.A_D)
        self.solver_F = SPDSolver(r.A_F)
        self.B = r.B()
        self.b = r.b()
        self.nD, self.nF, self.m = r.n_D, r.n_F, r.n_psi

    # constraint solves; the two blocks are independent
    def solve_A(self, rhs: np.ndarray) -> np.ndarray:
        return np.concatenate([self.solver_D.solve(rhs[: self.nD]), self.solver_F.solve(rhs[self.nD :])])

    def h_of_psi(self, psi: np.ndarray) -> np.ndarray:
        return self.solve_A(self.B @ psi + self.b)

    def functional(self, h: np.ndarray, psi: np.ndarray) -> float:
        r = self.red
        Gh = r.G_h @ h + r.E @ psi
        Gp = r.E.T @ h + r.G_psi @ psi
        return float(h @ Gh + psi @ Gp + 2.0 * (h @ r.q_h + psi @ r.q_psi) + r.r)

    def J(self, psi: np.ndarray) -> float:
        return self.functional(self.h_of_psi(psi), psi)

    def reduced_gradient(self, psi: np.ndarray, h: Optional[np.ndarray] = None):
        """Exact gradient of J with respect to psi, with ``h`` and ``lambda``.

        Two inner solves: the state ``h = A^{-1}(B psi + b)`` and the adjoint
        ``lam_bar = A^{-1}(G_h h + E psi + q_h)``. The reported multiplier is
        ``-lam_bar``, the sign of the saddle-point formulation.
        """
        r = self.red
        if h is None:
            h = self.h_of_psi(psi)
        lam_bar = self.solve_A(r.G_h @ h + r.E @ psi + r.q_h)
        grad = 2.0 * (self.B.T @ lam_bar + r.E.T @ h + r.G_psi @ psi + r.q_psi)
        return grad, h, -lam_bar

    def hessian_apply(self, d: np.ndarray):
        """Reduced Hessian times ``d``; also returns ``dh = A^{-1} B d``."""
        r = self.red
        dh = self.solve_A(self.B @ d)
        adj = self.solve_A(r.G_h @ dh + r.E @ d)
        return 2.0 * (self.B.T @ adj + r.E.T @ dh + r.G_psi @ d), dh

    def state(self, h: np.ndarray, psi: np.ndarray) -> FiveFieldState:
        hD, hF = self.red.expand(h)
        dm = self.blocks.dofmap
        a, b = dm.M_plus, dm.M_plus + dm.M_minus
        return FiveFieldState(hD, hF, psi[:a].copy(), psi[a:b].copy(), psi[b:].copy())

    def full_multiplier(self, lam: np.ndarray) -> np.ndarray:
        dm = self.blocks.dofmap
        out = np.zeros(dm.N_D + dm.N_F)
        out[self.red.free_3d] = lam[: self.nD]
        out[dm.N_D + self.red.free_2d] = lam[self.nD :]
        return out


def solve_cg(problem: FiveFieldProblem, psi0: Optional[np.ndarray] = None, tol: float = 1e-7,
             max_iters: int = 1000, preconditioner: Optional[np.ndarray] = None):
    """Conjugate gradients on the reduced quadratic.

    Convergence is ``||grad J(psi_k)|| <= tol * ||grad J(psi_0)||``. The
    optional `preconditioner` is a diagonal (array of inverse weights).

    Returns
    -------
    state : FiveFieldState
    report : SolveReport
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    psi = np.zeros(problem.m) if psi0 is None else np.asarray(psi0, dtype=float).copy()
    grad, h, _ = problem.reduced_gradient(psi)
    g0 = np.linalg.norm(grad)
    res_hist = [1.0]
    J_hist = [problem.functional(h, psi)]
    it = 0
    converged = g0 == 0.0
    if not converged:
        z = grad if preconditioner is None else preconditioner * grad
        d = -z
        rz = grad @ z
        while it < max_iters:
            Hd, dh = problem.hessian_apply(d)
            curv = d @ Hd
            if curv <= 0:
                break
            alpha = rz / curv
            psi += alpha * d
            h += alpha * dh
            grad += alpha * Hd
            it += 1
            res = np.linalg.norm(grad) / g0
            res_hist.append(res)
            J_hist.append(problem.functional(h, psi))
            if res <= tol:
                converged = True
                break
            z = grad if preconditioner is None else preconditioner * grad
            rz_new = grad @ z
            d = -z + (rz_new / rz) * d
            rz = rz_new

    grad, h, lam = problem.reduced_gradient(psi)
    rel = np.linalg.norm(grad) / g0 if g0 > 0 else 0.0
    state = problem.state(h, psi)
    # direct quadrature avoids the cancellation in the algebraic form
    J = evaluate_functional(problem.blocks, state)
    report = SolveReport(
        iterations=it, relative_residual=float(rel), functional_value=J,
        lambda_=problem.full_multiplier(lam), wall_time=time.perf_counter() - t0,
        converged=bool(converged), method="cg", residual_history=res_hist, functional_history=J_hist,
        inner_residual=max(problem.solver_D.max_residual, problem.solver_F.max_residual),
    )
    return state, report


def kkt_matrix(red: ReducedSystem):
    """Saddle-point matrix ``[[G, C^T], [C, 0]]`` and right-hand side."""
    C, b = assemble_constraint_C(red)
    G = sp.bmat([[red.G_h, red.E], [red.E.T, red.G_psi]], format="csr")
    q = np.concatenate([red.q_h, red.q_psi])
    K = sp.bmat([[G, C.T], [C, None]], format="csc")
    return K, np.concatenate([-q, b])


def solve_kkt_direct(problem: FiveFieldProblem):
    """Direct solve of the optimality system (oracle for small instances).

    Raises
    ------
    SingularSystemError
        If the factorization fails or yields non-finite values.
    """
    t0 = time.perf_counter()
    K, rhs = kkt_matrix(problem.red)
    try:
        sol = sla.splu(K).solve(rhs)
    except RuntimeError as exc:
        raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise SingularSystemError("non-finite KKT solution")
    n = problem.nD + problem.nF
    h, psi, lam = sol[:n], sol[n : n + problem.m], sol[n + problem.m :]
    state = problem.state(h, psi)
    report = SolveReport(
        iterations=0, relative_residual=float(np.linalg.norm(K @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)),
        functional_value=evaluate_functional(problem.blocks, state), lambda_=problem.full_multiplier(lam[:n]),
        wall_time=time.perf_counter() - t0, converged=True, method="kkt",
    )
    return state, report


def smallest_singular_value(problem: FiveFieldProblem) -> float:
    """Dense smallest singular value of the saddle-point matrix."""
    K, _ = kkt_matrix(problem.red)
    return float(np.linalg.svd(K.toarray(), compute_uv=False).min())


class FractureField:
    """P1 evaluation of a fracture field with triangle lookup."""

    def __init__(self, mesh2d):
        self.mesh = mesh2d
        xy = mesh2d.vertices[mesh2d.triangles]
        e1, e2 = xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        self._x0 = xy[:, 0]
        self._inv = np.stack([np.stack([e2[:, 1], -e2[:, 0]], 1), np.stack([-e1[:, 1], e1[:, 0]], 1)], 1) / det[:, None, None]
        self._tree = cKDTree(xy.mean(axis=1))

    def barycentric(self, tri: np.ndarray, xf: np.ndarray) -> np.ndarray:
        lam = np.einsum("nij,nj->ni", self._inv[tri], xf - self._x0[tri])
        return np.column_stack([1.0 - lam.sum(axis=1), lam])

    def locate(self, xf: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        xf = np.atleast_2d(xf)
        k = min(16, self.mesh.n_triangles)
        _, cand = self._tree.query(xf, k=k)
        cand = np.asarray(cand).reshape(len(xf), -1)
        found = np.full(len(xf), -1, dtype=int)
        for j in range(cand.shape[1]):
            todo = np.flatnonzero(found < 0)
            if len(todo) == 0:
                break
            lam = self.barycentric(cand[todo, j], xf[todo])
            ok = lam.min(axis=1) >= -tol
            found[todo[ok]] = cand[todo[ok], j]
        return found

    def evaluate(self, coeffs: np.ndarray, xf: np.ndarray, tri: Optional[np.ndarray] = None) -> np.ndarray:
        xf = np.atleast_2d(xf)
        if tri is None:
            tri = self.locate(xf)
        if np.any(tri < 0):
            raise ValueError("point outside the fracture mesh")
        lam = self.barycentric(tri, xf)
        return np.einsum("ni,ni->n", lam, coeffs[self.mesh.triangles[tri]])


def interface_integrals(blocks: BlockSystem, state: FiveFieldState, degree: int = 4) -> dict:
    """Per fracture triangle integrals of the traces and of the squared
    discrepancies, by quadrature over the interface tiling.

    Keys: ``h_plus``, ``h_minus``, ``h_F`` (integrals of the traces) and
    ``local_J`` (contribution of each triangle to J).
    """
    state.check(blocks.dofmap)
    M = blocks.mesh2d.n_triangles
    out = {k: np.zeros(M) for k in ("h_plus", "h_minus", "h_F", "local_J")}
    space, pieces = blocks.space, blocks.pieces
    if len(pieces.tet) == 0:
        return out
    ff = FractureField(blocks.mesh2d)
    rule = quadrature("triangle", degree)
    xf, w = map_triangles(pieces.triangles, rule)
    nq = w.shape[1]
    xf = xf.reshape(-1, 2)
    w = w.reshape(-1)
    tets = np.repeat(pieces.tet, nq)
    tri = np.repeat(pieces.tri, nq)
    x3 = space.frac.to_global(xf)
    hp, _ = space.evaluate(state.h_D, x3, side=1.0, tets=tets, grad=False)
    hm, _ = space.evaluate(state.h_D, x3, side=-1.0, tets=tets, grad=False)
    hf = ff.evaluate(state.h_F, xf, tri)
    local = (state.psi_plus[tri] - hp) ** 2 + (state.psi_minus[tri] - hm) ** 2 + (state.psi_F[tri] - hf) ** 2
    for key, vals in (("h_plus", hp), ("h_minus", hm), ("h_F", hf), ("local_J", local)):
        np.add.at(out[key], tri, w * vals)
    return out


def evaluate_functional(blocks: BlockSystem, state: FiveFieldState, degree: int = 4) -> float:
    """J by direct quadrature over the interface tiling."""
    return float(interface_integrals(blocks, state, degree)["local_J"].sum())


def exchange_flux(blocks: BlockSystem, state: FiveFieldState, xf: np.ndarray):
    """Pointwise exchange fluxes ``Q_pm = -eta (h_D_pm - h_F)`` at fracture points."""
    xf = np.atleast_2d(np.asarray(xf, dtype=float))
    frac = blocks.space.frac
    if not np.all(frac.contains(xf, tol=1e-12)):
        raise ValueError("point outside the fracture footprint")
    x3 = frac.to_global(xf)
    hp, _ = blocks.space.evaluate(state.h_D, x3, side=1.0, grad=False)
    hm, _ = blocks.space.evaluate(state.h_D, x3, side=-1.0, grad=False)
    hf = FractureField(blocks.mesh2d).evaluate(state.h_F, xf)
    eta = blocks.materials.eta_at(xf)
    return -eta * (hp - hf), -eta * (hm - hf)


def finite_difference_check(problem: FiveFieldProblem, psi: np.ndarray, n_dirs: int = 10,
                            steps=(1e-4, 1e-5, 1e-6), seed: int = 0):
    """Directional derivatives against central differences of J.

    Steps are relative to ``max(||psi||, 1)``. Returns an array of relative
    errors with shape (n_dirs, len(steps)) and the rounding floor of each
    step, ``eps * |J| / step``-type, below which differences are noise.
    """
    rng = np.random.default_rng(seed)
    grad, _, _ = problem.reduced_gradient(psi)
    scale = max(np.linalg.norm(psi), 1.0)
    J0 = abs(problem.J(psi))
    errs = np.zeros((n_dirs, len(steps)))
    floors = np.zeros((n_dirs, len(steps)))
    for i in range(n_dirs):
        d = rng.standard_normal(problem.m)
        d /= np.linalg.norm(d)
        dd = grad @ d
        for j, s in enumerate(steps):
            eps = s * scale
            fd = (problem.J(psi + eps * d) - problem.J(psi - eps * d)) / (2 * eps)
            denom = max(abs(dd), 1e-300)
            errs[i, j] = abs(fd - dd) / denom
            floors[i, j] = 10 * np.finfo(float).eps * (J0 + abs(dd) * eps) / (eps * denom)
    return errs, floors
