"""Classification of tetrahedra cut by the fracture plane, sub-tetrahedra
and convex polygon clipping for the mixed-mesh interface integrals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, cKDTree

from .mesh import FractureGeometry, Mesh2D, Mesh3D, polygon_area, tet_volumes

SNAP_TOL = 1e-12
AREA_TOL = 1e-14

_TET_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


def clip_convex(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of `subject` by a convex CCW `clipper`."""
    out = np.asarray(subject, dtype=float)
    m = len(clipper)
    for i in range(m):
        if len(out) == 0:
            break
        a = clipper[i]
        b = clipper[(i + 1) % m]
        nx, ny = a[1] - b[1], b[0] - a[0]
        s = (out[:, 0] - a[0]) * nx + (out[:, 1] - a[1]) * ny
        if np.all(s >= 0):
            continue
        if np.all(s <= 0):
            return np.zeros((0, 2))
        res = []
        k = len(out)
        for j in range(k):
            p, q = out[j], out[(j + 1) % k]
            sp, sq = s[j], s[(j + 1) % k]
            if sp >= 0:
                res.append(p)
            if (sp > 0 > sq) or (sp < 0 < sq):
                res.append(p + (sp / (sp - sq)) * (q - p))
        out = np.array(res).reshape(-1, 2)
    return out


def fan_triangulate(poly: np.ndarray) -> np.ndarray:
    """Triangles fanned from the vertex average of a convex polygon, (k, 3, 2)."""
    c = poly.mean(axis=0)
    nxt = np.roll(poly, -1, axis=0)
    return np.stack([np.broadcast_to(c, poly.shape), poly, nxt], axis=1)


def clip_cross_section_with_triangle(poly: np.ndarray, tri: np.ndarray) -> list:
    """Intersection of a convex polygon and a triangle as a list of triangles.

    Returns an empty list when the intersection has zero measure.
    """
    tri = np.asarray(tri, dtype=float)
    if polygon_area(tri) < 0:
        tri = tri[::-1]
    piece = clip_convex(poly, tri)
    scale = max(abs(polygon_area(np.asarray(poly, float))), abs(polygon_area(tri)))
    if len(piece) < 3 or polygon_area(piece) <= AREA_TOL * scale:
        return []
    return list(fan_triangulate(piece))


def segment_polygon_length(a: np.ndarray, b: np.ndarray, poly: np.ndarray) -> float:
    """Length of segment ``[a, b]`` inside a convex CCW polygon."""
    t0, t1 = 0.0, 1.0
    d = b - a
    m = len(poly)
    for i in range(m):
        p, q = poly[i], poly[(i + 1) % m]
        n = np.array([p[1] - q[1], q[0] - p[0]])
        num = n @ (a - p)
        den = n @ d
        if abs(den) < 1e-300:
            if num < 0:
                return 0.0
            continue
        t = -num / den
        if den > 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 >= t1:
            return 0.0
    return float((t1 - t0) * np.linalg.norm(d))


def _orient(tets: np.ndarray) -> np.ndarray:
    vol = tet_volumes(tets)
    flip = vol < 0
    tets[flip] = tets[flip][:, [0, 2, 1, 3]]
    return tets


def _prism(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # triangles a, b with a[i] -- b[i] lateral edges; planar lateral faces assumed
    return np.array([
        [a[0], a[1], a[2], b[2]],
        [a[0], a[1], b[1], b[2]],
        [a[0], b[0], b[1], b[2]],
    ])


def _hull_tets(points: np.ndarray) -> np.ndarray:
    if len(points) == 4:
        return points[None].copy()
    hull = ConvexHull(points)
    tets = [points[[0, *s]] for s in hull.simplices if 0 not in s]
    return np.array(tets)


def split_tet_by_plane(coords: np.ndarray, dist: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split one tetrahedron by the zero level of vertex distances `dist`.

    Returns sub-tetrahedra ``(plus, minus)`` as (k, 4, 3) arrays. Vertices
    with zero distance belong to both sides.
    """
    pos = np.flatnonzero(dist > 0)
    neg = np.flatnonzero(dist < 0)
    empty = np.zeros((0, 4, 3))
    if len(neg) == 0:
        return coords[None].copy(), empty
    if len(pos) == 0:
        return empty, coords[None].copy()

    def cross(i, j):
        t = dist[i] / (dist[i] - dist[j])
        return coords[i] + t * (coords[j] - coords[i])

    if len(pos) + len(neg) == 4:
        if len(pos) == 1 or len(neg) == 1:
            lone, rest = (pos[0], neg) if len(pos) == 1 else (neg[0], pos)
            cuts = np.array([cross(lone, j) for j in rest])
            small = np.array([[coords[lone], *cuts]])
            big = _prism(coords[rest], cuts)
            plus, minus = (small, big) if len(pos) == 1 else (big, small)
        else:
            p0, p1 = pos
            m0, m1 = neg
            plus = _prism(
                np.array([coords[p0], cross(p0, m0), cross(p0, m1)]),
                np.array([coords[p1], cross(p1, m0), cross(p1, m1)]),
            )
            minus = _prism(
                np.array([coords[m0], cross(m0, p0), cross(m0, p1)]),
                np.array([coords[m1], cross(m1, p0), cross(m1, p1)]),
            )
        return _orient(plus), _orient(minus)

    zero = np.flatnonzero(dist == 0)
    cuts = [cross(i, j) for i in pos for j in neg]
    plus = _hull_tets(np.array([*coords[pos], *coords[zero], *cuts]))
    minus = _hull_tets(np.array([*coords[neg], *coords[zero], *cuts]))
    return _orient(plus), _orient(minus)


def split_tets_by_plane(tets: np.ndarray, normal: np.ndarray, offset: float, tol: float = 0.0):
    """Split a batch of (k, 4, 3) tetrahedra by the plane ``normal . x = offset``."""
    plus, minus = [], []
    for t in tets:
        d = t @ normal - offset
        d[np.abs(d) <= tol] = 0.0
        p, m = split_tet_by_plane(t, d)
        plus.extend(p)
        minus.extend(m)
    return np.array(plus).reshape(-1, 4, 3), np.array(minus).reshape(-1, 4, 3)


@dataclass(frozen=True)
class CutClassification:
    """Result of intersecting a tetrahedral mesh with the fracture plane.

    Attributes
    ----------
    distance : (nv,) snapped signed vertex distances to the fracture plane.
    vertex_side : (nv,) ``+1`` / ``-1``; on-plane vertices count as ``+1``.
    cut_tets : tets crossed by the plane with positive cross-section inside
        the fracture footprint.
    edge_tets : cut tets whose plane cross-section meets an interior fracture
        edge.
    subtets : tet index -> ``(plus, minus)`` sub-tetrahedra, for every tet in
        ``cut_tets`` or ``edge_tets``.
    cross_sections : tet index -> clipped cross-section polygon in the fracture
        frame. Includes tets owning a plane-coincident face on the plus side.
    """

    distance: np.ndarray
    vertex_side: np.ndarray
    cut_tets: np.ndarray
    edge_tets: np.ndarray
    subtets: dict
    cross_sections: dict

    @property
    def enriched_tets(self) -> np.ndarray:
        return np.union1d(self.cut_tets, self.edge_tets)

    def section_area(self) -> float:
        return float(sum(polygon_area(p) for p in self.cross_sections.values()))


def _cross_section(coords, d, frac):
    pts = [coords[i] for i in range(4) if d[i] == 0]
    for i, j in _TET_EDGES:
        if d[i] * d[j] < 0:
            t = d[i] / (d[i] - d[j])
            pts.append(coords[i] + t * (coords[j] - coords[i]))
    local = frac.to_local(np.array(pts))
    c = local.mean(axis=0)
    order = np.argsort(np.arctan2(local[:, 1] - c[1], local[:, 0] - c[0]))
    return local[order]


def classify_and_cut(mesh: Mesh3D, frac: FractureGeometry) -> CutClassification:
    """Classify tetrahedra against the fracture and build the cut data."""
    scale = float(np.linalg.norm(mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)))
    dist = frac.signed_distance(mesh.vertices)
    dist = np.where(np.abs(dist) < SNAP_TOL * scale, 0.0, dist)
    side = np.where(dist >= 0, 1, -1).astype(np.int8)

    sd = np.sign(dist[mesh.tets])
    strict = (sd > 0).any(axis=1) & (sd < 0).any(axis=1)
    face_touch = ((sd == 0).sum(axis=1) == 3) & (sd > 0).any(axis=1)

    poly = frac.polygon
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    int_edges = [(poly[i], poly[(i + 1) % len(poly)]) for i in frac.interior_edges]
    area_tol = AREA_TOL * frac.area

    cut, edge, subtets, sections = [], [], {}, {}
    for t in np.flatnonzero(strict | face_touch):
        coords = mesh.vertices[mesh.tets[t]]
        d = dist[mesh.tets[t]]
        sec = _cross_section(coords, d, frac)
        if np.any(sec.max(axis=0) < lo) or np.any(sec.min(axis=0) > hi):
            continue
        clipped = clip_convex(sec, poly)
        has_area = len(clipped) >= 3 and polygon_area(clipped) > area_tol
        if has_area:
            sections[int(t)] = clipped
        if not strict[t]:
            continue
        on_edge = any(
            segment_polygon_length(a, b, sec) > 1e-12 * np.linalg.norm(b - a) for a, b in int_edges
        )
        # a tet only touching the edge from outside the footprint has no
        # bubble support and would carry an identically zero enrichment
        if on_edge and has_area:
            edge.append(int(t))
        if has_area:
            cut.append(int(t))
        if has_area or on_edge:
            subtets[int(t)] = split_tet_by_plane(coords, d)

    return CutClassification(
        distance=dist,
        vertex_side=side,
        cut_tets=np.array(cut, dtype=int),
        edge_tets=np.array(edge, dtype=int),
        subtets=subtets,
        cross_sections=sections,
    )


@dataclass(frozen=True)
class InterfacePieces:
    """Common refinement of tet cross-sections and fracture triangles.

    Each row is a triangle (fracture frame) lying inside the cross-section of
    tetrahedron ``tet[i]`` and inside fracture triangle ``tri[i]``.
    """

    triangles: np.ndarray
    tet: np.ndarray
    tri: np.ndarray


def interface_pieces(cut: CutClassification, mesh2d: Mesh2D) -> InterfacePieces:
    """Clip every stored cross-section against the overlapping fracture triangles."""
    if not cut.cross_sections:
        return InterfacePieces(np.zeros((0, 3, 2)), np.zeros(0, int), np.zeros(0, int))
    tri_xy = mesh2d.vertices[mesh2d.triangles]
    tri_c = tri_xy.mean(axis=1)
    tri_r = np.linalg.norm(tri_xy - tri_c[:, None], axis=2).max(axis=1)
    tri_lo, tri_hi = tri_xy.min(axis=1), tri_xy.max(axis=1)
    tree = cKDTree(tri_c)

    keys = list(cut.cross_sections)
    polys = [cut.cross_sections[k] for k in keys]
    cents = np.array([p.mean(axis=0) for p in polys])
    radii = np.array([np.linalg.norm(p - p.mean(axis=0), axis=1).max() for p in polys])
    candidates = tree.query_ball_point(cents, radii + tri_r.max() * (1 + 1e-9))

    out_tris, out_tet, out_tri = [], [], []
    for key, poly, cand in zip(keys, polys, candidates):
        plo, phi = poly.min(axis=0), poly.max(axis=0)
        for j in sorted(cand):
            if np.any(tri_lo[j] > phi) or np.any(tri_hi[j] < plo):
                continue
            pieces = clip_cross_section_with_triangle(poly, tri_xy[j])
            if pieces:
                out_tris.extend(pieces)
                out_tet.extend([key] * len(pieces))
                out_tri.extend([j] * len(pieces))
    return InterfacePieces(
        np.array(out_tris).reshape(-1, 3, 2), np.array(out_tet, dtype=int), np.array(out_tri, dtype=int)
    )
