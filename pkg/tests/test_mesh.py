from __future__ import annotations

import numpy as np
import pytest

from fivefield.mesh import (
    BoxDomain,
    Dirichlet,
    FractureGeometry,
    GeometryError,
    Neumann,
    generate_box_tet_mesh,
    generate_fracture_tri_mesh,
    read_mesh2d,
    read_mesh3d,
    write_mesh2d,
    write_mesh3d,
)

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def unit_box():
    return BoxDomain([0, 0, 0], [1, 2, 3], {"x-": Dirichlet(0.0)})


def test_box_mesh_volume_orientation_and_tags():
    box = unit_box()
    m = generate_box_tet_mesh(box, (3, 4, 5))
    vol = m.volumes()
    assert np.all(vol > 0)
    assert np.isclose(vol.sum(), 6.0, rtol=1e-13)
    assert m.n_tets == 6 * 3 * 4 * 5
    # every boundary face area sums to the box surface
    p = m.vertices[m.boundary_faces]
    area = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    assert np.isclose(area.sum(), 2 * (1 * 2 + 1 * 3 + 2 * 3))
    assert np.isclose(area[m.boundary_tags == "z+"].sum(), 2.0)
    assert np.isclose(m.delta_D, np.sqrt((1 / 3) ** 2 + 0.5**2 + 0.6**2))


def test_box_requires_dirichlet_and_valid_corners():
    with pytest.raises(GeometryError):
        BoxDomain([0, 0, 0], [1, 1, 1], {"x-": Neumann()})
    with pytest.raises(GeometryError):
        BoxDomain([0, 0, 0], [1, 0, 1], {"x-": Dirichlet()})
    with pytest.raises(GeometryError):
        BoxDomain([0, 0, 0], [1, 1, 1], {"w+": Dirichlet()})
    assert isinstance(unit_box().boundary_tags["z+"], Neumann)


def test_fracture_validation():
    with pytest.raises(GeometryError):
        FractureGeometry([0, 0, 0], [1, 0, 0], [1, 1, 0], SQUARE)
    with pytest.raises(GeometryError):
        FractureGeometry([0, 0, 0], [1, 0, 0], [0, 1, 0], SQUARE[::-1])
    with pytest.raises(GeometryError):
        FractureGeometry([0, 0, 0], [1, 0, 0], [0, 1, 0], np.array([[0, 0], [2, 0], [1, 0.2], [1, 2.0]]))


def test_fracture_frame_roundtrip(rng):
    frac = FractureGeometry([0.3, -1, 2], [0, 0, 1], [1, 0, 0], SQUARE)
    assert np.allclose(frac.normal, [0, 1, 0])
    xf = rng.uniform(0, 1, (10, 2))
    assert np.allclose(frac.to_local(frac.to_global(xf)), xf)
    assert np.allclose(frac.signed_distance(frac.to_global(xf)), 0)
    assert np.isclose(frac.area, 1.0)
    assert np.allclose(frac.barycenter, [0.5, 0.5])
    lines = frac.edge_lines()
    inside = frac.barycenter @ lines[:, :2].T + lines[:, 2]
    assert np.all(inside > 0) and np.allclose(np.linalg.norm(lines[:, :2], axis=1), 1)


@pytest.mark.parametrize("poly", [SQUARE, np.array([[0, 0], [1, 0], [0.3, 0.9]]),
                                  np.array([[0, 0], [1, 0.1], [1.2, 0.8], [0.4, 1.1], [-0.2, 0.5]])])
def test_fracture_mesh_covers_polygon(poly):
    frac = FractureGeometry([0, 0, 0], [1, 0, 0], [0, 1, 0], poly)
    m2 = generate_fracture_tri_mesh(frac, target_h=0.2)
    assert np.all(m2.areas() > 0)
    assert np.isclose(m2.areas().sum(), frac.area, rtol=1e-12)
    assert m2.delta_F <= 0.2 + 1e-12
    # boundary edges lie on the polygon boundary
    lines = frac.edge_lines()
    mid = m2.vertices[m2.boundary_edges].mean(axis=1)
    assert np.all(np.abs(mid @ lines[:, :2].T + lines[:, 2]).min(axis=1) < 1e-12)


def test_fracture_mesh_divisions_counts():
    frac = FractureGeometry([0, 0, 0], [1, 0, 0], [0, 1, 0], SQUARE)
    m2 = generate_fracture_tri_mesh(frac, divisions=(12, 13))
    assert (m2.n_vertices, m2.n_triangles) == (13 * 14, 2 * 12 * 13)
    with pytest.raises(ValueError):
        generate_fracture_tri_mesh(frac)


def test_mesh_io_roundtrip(tmp_path):
    m = generate_box_tet_mesh(unit_box(), (2, 2, 2))
    write_mesh3d(m, tmp_path / "m.tet")
    r = read_mesh3d(tmp_path / "m.tet")
    assert np.array_equal(r.vertices, m.vertices) and np.array_equal(r.tets, m.tets)
    assert list(r.boundary_tags) == list(m.boundary_tags)
    frac = FractureGeometry([0, 0, 0], [1, 0, 0], [0, 1, 0], SQUARE)
    m2 = generate_fracture_tri_mesh(frac, divisions=(3, 3))
    write_mesh2d(m2, tmp_path / "f.tri")
    r2 = read_mesh2d(tmp_path / "f.tri")
    assert np.array_equal(r2.triangles, m2.triangles) and np.array_equal(r2.vertices, m2.vertices)
    (tmp_path / "bad.tet").write_text("NOPE 0 0 0\n")
    with pytest.raises(ValueError):
        read_mesh3d(tmp_path / "bad.tet")
