from __future__ import annotations

import numpy as np
import pytest

from fivefield.cases import get_case
from fivefield.cutting import classify_and_cut
from fivefield.mesh import generate_box_tet_mesh, generate_fracture_tri_mesh
from fivefield.xfem import BUBBLE, HEAVISIDE, EnrichmentSpec, XFEMSpace, build_dof_map, edge_bubble, heaviside


def make_space(name, level=0):
    case = get_case(name)
    lev = case.levels[level]
    mesh = generate_box_tet_mesh(case.box, lev.n3)
    m2 = generate_fracture_tri_mesh(case.fracture, divisions=lev.nf)
    cut = classify_and_cut(mesh, case.fracture)
    dm = build_dof_map(mesh, m2, cut, case.box, case.fracture)
    return XFEMSpace(mesh, case.fracture, cut, dm, EnrichmentSpec.from_fracture(case.fracture))


@pytest.fixture(scope="module")
def space3():
    return make_space("test3")


@pytest.fixture(scope="module")
def space0():
    return make_space("test0")


def test_sigma_normalizes_bubble_at_barycenter():
    frac = get_case("test3").fracture
    spec = EnrichmentSpec.from_fracture(frac)
    assert spec.sigma == pytest.approx(4.0)
    val, _ = edge_bubble(frac.to_global(frac.barycenter[None]), spec, frac)
    assert val[0] == pytest.approx(1.0)


def test_bubble_vanishes_on_interior_edges_and_outside():
    frac = get_case("test3").fracture
    spec = EnrichmentSpec.from_fracture(frac)
    on_edges = frac.to_global(np.array([[0.5, 0.1], [0.5, 0.4], [0.2, 0.5]]))
    outside = frac.to_global(np.array([[0.7, 0.2], [0.2, 0.8]]))
    assert np.all(edge_bubble(on_edges, spec, frac)[0] == 0)
    assert np.all(edge_bubble(outside, spec, frac)[0] == 0)
    # extruded along the normal
    p = frac.to_global(np.array([[0.2, 0.3]]))
    assert edge_bubble(p + 0.3 * frac.normal, spec, frac)[0] == pytest.approx(edge_bubble(p, spec, frac)[0])


def test_heaviside_rejects_plane_points():
    frac = get_case("test0").fracture
    assert list(heaviside(np.array([[0, 0, 0.1], [0, 0, -0.1]]), frac)) == [1, -1]
    with pytest.raises(ValueError):
        heaviside(np.array([[0.2, 0.1, 0.0]]), frac)


def test_dof_numbering(space3):
    dm = space3.dofmap
    nv = space3.mesh.n_vertices
    enr = dm.enr_dof[dm.enr_dof >= 0]
    assert np.array_equal(np.sort(enr), np.arange(nv, dm.N_D))
    assert np.all(dm.enr_kind[dm.enriched_E] == BUBBLE)
    assert np.all(dm.enr_kind[dm.enriched_H] == HEAVISIDE)
    assert dm.M_plus == dm.M_minus == dm.M_F
    # enriched DOFs at Dirichlet vertices are fixed to zero
    fixed = dict(zip(dm.dirichlet_3d, dm.dirichlet_3d_values))
    for v in dm.dirichlet_3d[dm.dirichlet_3d < nv]:
        if dm.enr_dof[v] >= 0:
            assert fixed[dm.enr_dof[v]] == 0.0


@pytest.mark.parametrize("which", ["space0", "space3"])
def test_partition_of_unity_and_shifted_enrichments(which, request, rng):
    space = request.getfixturevalue(which)
    t = rng.choice(space.support, 200)
    lam = rng.dirichlet(np.ones(4), 200)
    p = np.einsum("ni,nid->nd", lam, space.mesh.vertices[space.mesh.tets[t]])
    side = np.where(space.frac.signed_distance(p) > 0, 1.0, -1.0)
    v, g = space.basis(t, p, side)
    assert np.allclose(v[:, :4].sum(axis=1), 1, atol=1e-13)
    assert np.allclose(g[:, :4].sum(axis=1), 0, atol=1e-10)
    # at vertices every shifted enrichment vanishes
    verts = space.mesh.tets[t]
    for k in range(4):
        pv = space.mesh.vertices[verts[:, k]]
        sv = space.cut.vertex_side[verts[:, k]].astype(float)
        vv, _ = space.basis(t, pv, sv, grad=False)
        assert np.abs(vv[:, 4:]).max() <= 1e-13


def test_basis_gradient_finite_difference(space3, rng):
    t = rng.choice(space3.bubble_support, 100)
    lam = rng.dirichlet(np.ones(4) * 3, 100)
    p = np.einsum("ni,nid->nd", lam, space3.mesh.vertices[space3.mesh.tets[t]])
    side = np.where(space3.frac.signed_distance(p) > 0, 1.0, -1.0)
    _, g = space3.basis(t, p, side)
    h = 1e-6 * space3.mesh.delta_D
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        vp, _ = space3.basis(t, p + e, side, grad=False)
        vm, _ = space3.basis(t, p - e, side, grad=False)
        fd = (vp - vm) / (2 * h)
        scale = np.abs(g[:, :, k]).max()
        assert np.abs(fd - g[:, :, k]).max() <= 1e-6 * scale


def test_evaluate_requires_side_on_plane(space0):
    coeffs = np.zeros(space0.n_dofs)
    with pytest.raises(ValueError):
        space0.evaluate(coeffs, np.array([[0.1, 0.2, 0.0]]))
    with pytest.raises(ValueError):
        space0.evaluate(coeffs, np.array([[3.0, 0.0, 0.5]]))
    val, _ = space0.evaluate(coeffs, np.array([[0.1, 0.2, 0.0]]), side=1.0)
    assert val[0] == 0.0


def test_locate(space0, rng):
    p = rng.uniform(-1, 1, (300, 3))
    t = space0.locate(p)
    lam = space0.barycentric(t, p)
    assert np.all(lam >= -1e-10)
