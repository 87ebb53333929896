"""Box and fracture geometry, structured simplicial meshes and mesh I/O."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np

FACES = ("x-", "x+", "y-", "y+", "z-", "z+")

Value = Union[float, Callable[[np.ndarray], np.ndarray]]


class GeometryError(ValueError):
    """Invalid or degenerate geometric input."""


@dataclass(frozen=True)
class Dirichlet:
    value: Value = 0.0

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        if callable(self.value):
            return np.asarray(self.value(points), dtype=float)
        return np.full(len(points), float(self.value))


@dataclass(frozen=True)
class Neumann:
    # only homogeneous data is used by the assembled systems
    value: float = 0.0


BoundaryCondition = Union[Dirichlet, Neumann]


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box with one boundary condition per face.

    Faces are named ``"x-"``, ``"x+"``, ``"y-"``, ``"y+"``, ``"z-"``, ``"z+"``.
    Faces missing from `boundary_tags` default to homogeneous Neumann.
    """

    min_corner: np.ndarray
    max_corner: np.ndarray
    boundary_tags: dict = field(default_factory=dict)

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=float)
        hi = np.asarray(self.max_corner, dtype=float)
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(lo >= hi):
            raise GeometryError("box corners must satisfy min_corner < max_corner")
        tags = {f: self.boundary_tags.get(f, Neumann()) for f in FACES}
        unknown = set(self.boundary_tags) - set(FACES)
        if unknown:
            raise GeometryError(f"unknown box faces {sorted(unknown)}")
        if not any(isinstance(t, Dirichlet) for t in tags.values()):
            raise GeometryError("at least one face must carry a Dirichlet condition")
        object.__setattr__(self, "boundary_tags", tags)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.max_corner - self.min_corner))


@dataclass(frozen=True)
class FractureGeometry:
    """Planar convex polygonal fracture.

    The local frame maps ``x -> ((x - origin) . u, (x - origin) . v)`` and the
    normal is ``u x v``. `polygon` is counter-clockwise in the local frame.
    `interior_edges` lists the polygon edges (edge ``i`` joins vertex ``i`` to
    vertex ``i + 1``) lying inside the domain. `boundary_tags` maps edge
    indices to boundary conditions; missing edges are homogeneous Neumann.
    """

    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray
    polygon: np.ndarray
    interior_edges: tuple = ()
    boundary_tags: dict = field(default_factory=dict)

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if abs(np.linalg.norm(u) - 1) > 1e-12 or abs(np.linalg.norm(v) - 1) > 1e-12 or abs(u @ v) > 1e-12:
            raise GeometryError("fracture frame axes must be orthonormal")
        poly = np.asarray(self.polygon, dtype=float)
        if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
            raise GeometryError("fracture polygon needs at least 3 planar vertices")
        if polygon_area(poly) <= 0:
            raise GeometryError("fracture polygon must be counter-clockwise with positive area")
        if not is_convex(poly):
            raise GeometryError("only convex fracture polygons are supported")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "polygon", poly)
        object.__setattr__(self, "interior_edges", tuple(int(i) for i in self.interior_edges))

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.u, self.v)

    @property
    def area(self) -> float:
        return polygon_area(self.polygon)

    @property
    def barycenter(self) -> np.ndarray:
        return polygon_centroid(self.polygon)

    def to_local(self, x: np.ndarray) -> np.ndarray:
        d = np.asarray(x, dtype=float) - self.origin
        return np.stack([d @ self.u, d @ self.v], axis=-1)

    def to_global(self, xf: np.ndarray) -> np.ndarray:
        xf = np.asarray(xf, dtype=float)
        return self.origin + xf[..., :1] * self.u + xf[..., 1:2] * self.v

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.origin) @ self.normal

    def edge_lines(self, edges=None) -> np.ndarray:
        """Line equations ``a x_F + b y_F + c`` of polygon edges.

        Normalized to unit gradient and positive inside the polygon.
        """
        idx = range(len(self.polygon)) if edges is None else edges
        lines = []
        for i in idx:
            a = self.polygon[i]
            b = self.polygon[(i + 1) % len(self.polygon)]
            t = (b - a) / np.linalg.norm(b - a)
            n_in = np.array([-t[1], t[0]])
            lines.append([n_in[0], n_in[1], -n_in @ a])
        return np.array(lines, dtype=float).reshape(-1, 3)

    def interior_lines(self) -> np.ndarray:
        return self.edge_lines(self.interior_edges)

    def contains(self, xf: np.ndarray, tol: float = 0.0) -> np.ndarray:
        lines = self.edge_lines()
        xf = np.atleast_2d(xf)
        vals = xf @ lines[:, :2].T + lines[:, 2]
        return np.all(vals >= -tol, axis=1)


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polygon_centroid(poly: np.ndarray) -> np.ndarray:
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2.0
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)


def is_convex(poly: np.ndarray) -> bool:
    d1 = np.roll(poly, -1, axis=0) - poly
    d2 = np.roll(d1, -1, axis=0)
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    return bool(np.all(cross >= -1e-14 * np.abs(d1).max() ** 2))


@dataclass(frozen=True)
class Mesh3D:
    """Tetrahedral mesh with tagged boundary faces.

    `boundary_tags` holds the box face name of each boundary triangle.
    `delta_D` is the maximum tetrahedron diameter.
    """

    vertices: np.ndarray
    tets: np.ndarray
    boundary_faces: np.ndarray
    boundary_tags: np.ndarray
    delta_D: float

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    def tet_coords(self, idx=None) -> np.ndarray:
        t = self.tets if idx is None else self.tets[idx]
        return self.vertices[t]

    def volumes(self) -> np.ndarray:
        return tet_volumes(self.vertices[self.tets])

    def diameters(self) -> np.ndarray:
        return simplex_diameters(self.vertices[self.tets])


@dataclass(frozen=True)
class Mesh2D:
    """Triangle mesh in the fracture local frame."""

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    delta_F: float

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def tet_volumes(coords: np.ndarray) -> np.ndarray:
    J = np.stack([coords[:, 1] - coords[:, 0], coords[:, 2] - coords[:, 0], coords[:, 3] - coords[:, 0]], axis=2)
    return np.linalg.det(J) / 6.0


def simplex_diameters(coords: np.ndarray) -> np.ndarray:
    k = coords.shape[1]
    best = np.zeros(len(coords))
    for i, j in itertools.combinations(range(k), 2):
        best = np.maximum(best, np.linalg.norm(coords[:, i] - coords[:, j], axis=1))
    return best


def generate_box_tet_mesh(box: BoxDomain, n_per_axis) -> Mesh3D:
    """Structured Kuhn mesh: each hexahedral cell is split into 6 tetrahedra."""
    n = np.asarray(n_per_axis, dtype=int).reshape(3)
    if np.any(n < 1):
        raise ValueError("n_per_axis must be >= 1 in every direction")
    axes = [np.linspace(box.min_corner[d], box.max_corner[d], n[d] + 1) for d in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (n[1] + 1) + j) * (n[2] + 1) + k

    I, J, K = np.meshgrid(np.arange(n[0]), np.arange(n[1]), np.arange(n[2]), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    tets = []
    for perm in itertools.permutations(range(3)):
        off = np.zeros(3, dtype=int)
        corners = [vid(I, J, K)]
        for axis in perm:
            off[axis] += 1
            corners.append(vid(I + off[0], J + off[1], K + off[2]))
        tets.append(np.column_stack(corners))
    tets = np.stack(tets, axis=1).reshape(-1, 4)

    vol = tet_volumes(vertices[tets])
    neg = vol < 0
    tets[neg] = tets[neg][:, [0, 2, 1, 3]]

    faces, tags = _box_boundary_faces(vertices, tets, box)
    delta = float(simplex_diameters(vertices[tets]).max())
    return Mesh3D(vertices, tets, faces, tags, delta)


def _box_boundary_faces(vertices, tets, box):
    local = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])
    all_faces = tets[:, local].reshape(-1, 3)
    scale = box.diameter
    faces, tags = [], []
    for d in range(3):
        for side, bound in (("-", box.min_corner[d]), ("+", box.max_corner[d])):
            on = np.all(np.abs(vertices[all_faces, d] - bound) <= 1e-12 * scale, axis=1)
            faces.append(all_faces[on])
            tags.append(np.full(on.sum(), f"{'xyz'[d]}{side}", dtype=object))
    return np.concatenate(faces), np.concatenate(tags)


def _clip_convex(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    from .cutting import clip_convex

    return clip_convex(subject, clipper)


def generate_fracture_tri_mesh(frac: FractureGeometry, target_h: float | None = None, divisions=None) -> Mesh2D:
    """Triangulate the fracture polygon.

    A background grid over the polygon bounding box is clipped to the
    polygon; full cells are split into two triangles and clipped cells are
    fan-triangulated. Either `target_h` (max triangle diameter) or explicit
    grid `divisions` ``(nu, nv)`` must be given.
    """
    poly = frac.polygon
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    ext = hi - lo
    if divisions is None:
        if target_h is None or target_h <= 0:
            raise ValueError("target_h must be positive")
        # cell diagonal bounds the triangle diameter
        k = 1
        while np.hypot(*(ext / k)) > target_h:
            k += 1
        ratio = ext / ext.max()
        nu = max(1, int(np.ceil(k * ratio[0] - 1e-9)))
        nv = max(1, int(np.ceil(k * ratio[1] - 1e-9)))
        while np.hypot(ext[0] / nu, ext[1] / nv) > target_h:
            nu, nv = nu + 1, nv + 1
    else:
        nu, nv = (int(d) for d in divisions)
    us = np.linspace(lo[0], hi[0], nu + 1)
    vs = np.linspace(lo[1], hi[1], nv + 1)

    scale = float(ext.max())
    key_tol = 1e-9 * scale
    index: dict = {}
    verts: list = []

    def add(p):
        key = (round(p[0] / key_tol), round(p[1] / key_tol))
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        return index[key]

    is_rect = len(poly) == 4 and np.allclose(
        sorted(map(tuple, np.round(poly, 14))),
        sorted([(lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])]),
    )
    tris = []
    for i in range(nu):
        for j in range(nv):
            cell = np.array([[us[i], vs[j]], [us[i + 1], vs[j]], [us[i + 1], vs[j + 1]], [us[i], vs[j + 1]]])
            if is_rect:
                piece = cell
            else:
                piece = _clip_convex(cell, poly)
                if len(piece) < 3 or polygon_area(piece) <= 1e-14 * frac.area:
                    continue
            ids = [add(p) for p in piece]
            if len(ids) == 4 and is_rect:
                tris.append([ids[0], ids[1], ids[2]])
                tris.append([ids[0], ids[2], ids[3]])
            else:
                for k in range(1, len(ids) - 1):
                    tris.append([ids[0], ids[k], ids[k + 1]])
    if not tris:
        raise GeometryError("degenerate fracture polygon")
    vertices = np.array(verts)
    triangles = np.array(tris, dtype=int)
    area = Mesh2D(vertices, triangles, np.zeros((0, 2), int), np.zeros(0, object), 0.0).areas()
    triangles = triangles[area > 1e-14 * frac.area]

    edges, tags = _polygon_boundary_edges(vertices, triangles, frac)
    delta = float(simplex_diameters(vertices[triangles]).max())
    return Mesh2D(vertices, triangles, edges, tags, delta)


def _polygon_boundary_edges(vertices, triangles, frac):
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    key = np.sort(e, axis=1)
    uniq, counts = np.unique(key, axis=0, return_counts=True)
    bnd = uniq[counts == 1]
    lines = frac.edge_lines()
    mid = vertices[bnd].mean(axis=1)
    dist = np.abs(mid @ lines[:, :2].T + lines[:, 2])
    which = np.argmin(dist, axis=1)
    return bnd, which.astype(object)


def write_mesh3d(mesh: Mesh3D, path) -> None:
    """Write ``TET3D <nv> <nt> <nbf>`` text format."""
    lines = [f"TET3D {mesh.n_vertices} {mesh.n_tets} {len(mesh.boundary_faces)}"]
    lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [" ".join(map(str, t)) for t in mesh.tets]
    lines += [f"{a} {b} {c} {tag}" for (a, b, c), tag in zip(mesh.boundary_faces, mesh.boundary_tags)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh3d(path) -> Mesh3D:
    rows = Path(path).read_text().split("\n")
    head = rows[0].split()
    if head[0] != "TET3D":
        raise ValueError(f"{path}: not a TET3D file")
    nv, nt, nb = map(int, head[1:4])
    body = rows[1:]
    vertices = np.array([list(map(float, r.split())) for r in body[:nv]]).reshape(nv, 3)
    tets = np.array([list(map(int, r.split())) for r in body[nv : nv + nt]], dtype=int).reshape(nt, 4)
    faces, tags = [], []
    for r in body[nv + nt : nv + nt + nb]:
        a, b, c, tag = r.split()
        faces.append([int(a), int(b), int(c)])
        tags.append(tag)
    vol = tet_volumes(vertices[tets])
    if np.any(vol <= 0):
        raise GeometryError(f"{path}: non-positive tetrahedron volume")
    delta = float(simplex_diameters(vertices[tets]).max())
    return Mesh3D(vertices, tets, np.array(faces, dtype=int).reshape(-1, 3), np.array(tags, dtype=object), delta)


def write_mesh2d(mesh: Mesh2D, path) -> None:
    """Write ``TRI2D <nv> <nt> <nbe>`` text format."""
    lines = [f"TRI2D {mesh.n_vertices} {mesh.n_triangles} {len(mesh.boundary_edges)}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [" ".join(map(str, t)) for t in mesh.triangles]
    lines += [f"{a} {b} {tag}" for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh2d(path) -> Mesh2D:
    rows = Path(path).read_text().split("\n")
    head = rows[0].split()
    if head[0] != "TRI2D":
        raise ValueError(f"{path}: not a TRI2D file")
    nv, nt, nb = map(int, head[1:4])
    body = rows[1:]
    vertices = np.array([list(map(float, r.split())) for r in body[:nv]]).reshape(nv, 2)
    tris = np.array([list(map(int, r.split())) for r in body[nv : nv + nt]], dtype=int).reshape(nt, 3)
    edges, tags = [], []
    for r in body[nv + nt : nv + nt + nb]:
        a, b, tag = r.split()
        edges.append([int(a), int(b)])
        tags.append(int(tag) if tag.lstrip("-").isdigit() else tag)
    delta = float(simplex_diameters(vertices[tris]).max())
    return Mesh2D(vertices, tris, np.array(edges, dtype=int).reshape(-1, 2), np.array(tags, dtype=object), delta)
