"""Random geometric instances shared by the property tests."""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull

from fivefield.mesh import FractureGeometry


def random_frame(rng):
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    return q[:, 0], q[:, 1]


def random_convex_polygon(rng, n=8, center=(0.0, 0.0), radius=1.0):
    while True:
        pts = np.asarray(center) + radius * rng.uniform(-1, 1, (n, 2))
        hull = ConvexHull(pts)
        poly = pts[hull.vertices]  # counter-clockwise
        e = np.roll(poly, -1, axis=0) - poly
        if len(poly) >= 3 and hull.volume > 1e-3 * radius**2 and np.linalg.norm(e, axis=1).min() > 1e-3 * radius:
            return poly


def random_tet(rng, min_quality=1e-2):
    while True:
        t = rng.standard_normal((4, 3))
        J = np.stack([t[1] - t[0], t[2] - t[0], t[3] - t[0]], axis=1)
        vol = np.linalg.det(J) / 6
        edges = max(np.linalg.norm(t[i] - t[j]) for i in range(4) for j in range(i))
        if abs(vol) > min_quality * edges**3:
            return t if vol > 0 else t[[0, 2, 1, 3]]


def random_fracture(rng, center, radius, n_interior=None):
    u, v = random_frame(rng)
    poly = random_convex_polygon(rng, n=6, radius=radius)
    k = len(poly)
    if n_interior is None:
        n_interior = rng.integers(0, k + 1)
    interior = tuple(sorted(rng.choice(k, size=n_interior, replace=False).tolist()))
    return FractureGeometry(origin=np.asarray(center, dtype=float), u=u, v=v, polygon=poly, interior_edges=interior)
