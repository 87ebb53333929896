"""Quadrature rules on the reference triangle and tetrahedron.

Reference triangle: (0,0), (1,0), (0,1), area 1/2.
Reference tetrahedron: (0,0,0), (1,0,0), (0,1,0), (0,0,1), volume 1/6.

Degrees 1 and 2 use the classical symmetric rules. Higher degrees use
collapsed (Stroud conical product) Gauss-Jacobi rules, which have positive
weights and points strictly inside the element.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 30


@dataclass(frozen=True)
class QuadratureRule:
    """Points in reference coordinates with matching weights."""

    kind: str
    degree: int
    points: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)

    def barycentric(self) -> np.ndarray:
        """Points as barycentric coordinates, shape (nq, dim + 1)."""
        lam0 = 1.0 - self.points.sum(axis=1, keepdims=True)
        return np.hstack([lam0, self.points])


def _gauss_jacobi_01(n: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    # rule for int_0^1 f(u) (1-u)^alpha du
    t, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (1.0 + t), w / 2.0 ** (alpha + 1.0)


def _stroud_triangle(degree: int) -> tuple[np.ndarray, np.ndarray]:
    n = math.ceil((degree + 1) / 2)
    u, wu = _gauss_jacobi_01(n, 1.0)
    v, wv = _gauss_jacobi_01(n, 0.0)
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    return pts, W.ravel()


def _stroud_tet(degree: int) -> tuple[np.ndarray, np.ndarray]:
    n = math.ceil((degree + 1) / 2)
    u, wu = _gauss_jacobi_01(n, 2.0)
    v, wv = _gauss_jacobi_01(n, 1.0)
    w, ww = _gauss_jacobi_01(n, 0.0)
    U, V, Wc = np.meshgrid(u, v, w, indexing="ij")
    weights = (wu[:, None, None] * wv[None, :, None] * ww[None, None, :]).ravel()
    x = U
    y = V * (1.0 - U)
    z = Wc * (1.0 - U) * (1.0 - V)
    pts = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    return pts, weights


@lru_cache(maxsize=None)
def quadrature(kind: str, degree: int) -> QuadratureRule:
    """Return a rule on the reference ``"triangle"`` or ``"tet"`` exact to `degree`.

    Raises
    ------
    ValueError
        If the kind is unknown or the degree is outside ``0..MAX_DEGREE``.
    """
    if kind not in ("triangle", "tet"):
        raise ValueError(f"unknown element kind {kind!r}")
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree}")

    if kind == "triangle":
        if degree <= 1:
            pts = np.array([[1.0 / 3.0, 1.0 / 3.0]])
            wts = np.array([0.5])
        elif degree == 2:
            pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
            wts = np.full(3, 1.0 / 6.0)
        else:
            pts, wts = _stroud_triangle(degree)
    else:
        if degree <= 1:
            pts = np.array([[0.25, 0.25, 0.25]])
            wts = np.array([1.0 / 6.0])
        elif degree == 2:
            a = (5.0 + 3.0 * math.sqrt(5.0)) / 20.0
            b = (5.0 - math.sqrt(5.0)) / 20.0
            pts = np.array([[b, b, b], [a, b, b], [b, a, b], [b, b, a]])
            wts = np.full(4, 1.0 / 24.0)
        else:
            pts, wts = _stroud_tet(degree)

    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(kind, degree, pts, wts)


def map_triangles(tri: np.ndarray, rule: QuadratureRule) -> tuple[np.ndarray, np.ndarray]:
    """Map a rule onto physical triangles.

    Parameters
    ----------
    tri : (n, 3, d) array
        Triangle vertices in ``d`` = 2 or 3 dimensions.

    Returns
    -------
    points : (n, nq, d) array
    weights : (n, nq) array
        Physical weights (reference weights times twice the area).
    """
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    if tri.shape[2] == 2:
        jac = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    else:
        jac = np.linalg.norm(np.cross(e1, e2), axis=1)
    lam = rule.barycentric()
    points = np.einsum("qi,nid->nqd", lam, tri)
    return points, jac[:, None] * rule.weights[None, :]


def map_tets(tets: np.ndarray, rule: QuadratureRule) -> tuple[np.ndarray, np.ndarray]:
    """Map a rule onto physical tetrahedra given as an (n, 4, 3) array."""
    J = np.stack([tets[:, 1] - tets[:, 0], tets[:, 2] - tets[:, 0], tets[:, 3] - tets[:, 0]], axis=2)
    det = np.abs(np.linalg.det(J))
    lam = rule.barycentric()
    points = np.einsum("qi,nid->nqd", lam, tets)
    return points, det[:, None] * rule.weights[None, :]
