from __future__ import annotations

import dataclasses

import numpy as np
import pytest
import scipy.sparse as sp

from fivefield.assembly import MaterialFields, assemble_blocks, assemble_constraint_C, eliminate_dirichlet
from fivefield.cases import get_case
from fivefield.cutting import InterfacePieces
from fivefield.harness import build_blocks
from fivefield.mesh import GeometryError


@pytest.fixture(scope="module")
def blocks1():
    return build_blocks(get_case("test1"), 0)


@pytest.fixture(scope="module")
def blocks3():
    return build_blocks(get_case("test3"), 0)


def _sym_err(M):
    return abs(M - M.T).max() / max(abs(M).max(), 1e-300)


@pytest.mark.parametrize("name", ["blocks1", "blocks3"])
def test_symmetry_and_psd(name, request):
    b = request.getfixturevalue(name)
    for M in (b.A_D, b.A_F, b.G_D, b.G_F):
        assert _sym_err(M) < 1e-13
    G = b.G()
    assert _sym_err(G) < 1e-13
    if G.shape[0] < 2000:
        ev = np.linalg.eigvalsh(G.toarray()).min()
    else:
        ev = min(x @ (G @ x) for x in np.random.default_rng(0).standard_normal((200, G.shape[0])))
    assert ev >= -1e-12 * abs(G).max()
    assert np.all(np.isfinite(b.rhs_g))


def test_constant_field_has_no_stiffness(blocks1):
    # standard DOFs at 1, enrichments at 0: gradient vanishes, only the
    # eta-coupling term sum_pm int eta phi_i remains
    one = np.zeros(blocks1.dofmap.N_D)
    one[: blocks1.dofmap.n_std] = 1.0
    r = blocks1.A_D @ one
    coupling = np.asarray(blocks1.B_F.sum(axis=1)).ravel()
    assert np.allclose(r, coupling, atol=1e-12)


def test_interface_blocks_consistency(blocks1):
    b = blocks1
    area = 4.0
    n_std = b.dofmap.n_std
    one = np.zeros(b.dofmap.N_D)
    one[:n_std] = 1.0
    # both traces of the constant 1 integrate to the fracture area
    assert one @ (b.G_D @ one) == pytest.approx(2 * area)
    assert -(one @ b.E_plus).sum() == pytest.approx(area)
    assert -(one @ b.E_minus).sum() == pytest.approx(area)
    assert b.G_psi_F.diagonal().sum() == pytest.approx(area)
    assert b.G_F.sum() == pytest.approx(area)
    assert -b.E_F.sum() == pytest.approx(area)
    assert b.B_plus.sum() == pytest.approx(area)  # eta = 1
    # with eta = 1, B_F collects both trace integrals
    assert b.B_F.sum() == pytest.approx(-(b.E_plus + b.E_minus).sum())


def test_source_integral(blocks1):
    # int_D g = int_{z>0} -e^z + int_{z<0} e^{-z} = 0 by symmetry; check one side
    b = blocks1
    case = get_case("test1")
    mat = dataclasses.replace(case.materials, g=lambda x, s: np.where(np.asarray(s) > 0, 1.0, 0.0))
    bb = assemble_blocks(b.space, b.mesh2d, b.pieces, mat)
    assert bb.rhs_g[: b.dofmap.n_std].sum() == pytest.approx(4.0, rel=1e-12)


def test_tiling_mismatch_raises(blocks1):
    b = blocks1
    broken = InterfacePieces(b.pieces.triangles[1:], b.pieces.tet[1:], b.pieces.tri[1:])
    with pytest.raises(GeometryError):
        assemble_blocks(b.space, b.mesh2d, broken, b.materials)


def test_reduction_and_constraint_shapes(blocks1):
    red = eliminate_dirichlet(blocks1)
    C, rhs = assemble_constraint_C(red)
    n = red.n_D + red.n_F
    assert C.shape == (n, n + red.n_psi)
    assert len(rhs) == n
    # Dirichlet faces do not touch the fracture in test1: no lift terms in J
    assert red.r == 0.0 and not np.any(red.q_h) and not np.any(red.q_psi)


def test_eta_weighted_cross_option(blocks1):
    b = blocks1
    mat = MaterialFields(K_D=1.0, K_F=1.0, eta=3.0)
    w = assemble_blocks(b.space, b.mesh2d, b.pieces, mat, eta_weighted_cross=True)
    u = assemble_blocks(b.space, b.mesh2d, b.pieces, mat)
    assert abs(w.E_plus - 3.0 * u.E_plus).max() < 1e-12


def test_dump(tmp_path, blocks1):
    blocks1.dump(tmp_path)
    head = (tmp_path / "A_D.coo").read_text().split("\n")[0].split()
    assert int(head[1]) == blocks1.A_D.shape[0] and int(head[3]) == blocks1.A_D.nnz
    assert len(np.loadtxt(tmp_path / "rhs_g.txt")) == blocks1.dofmap.N_D


def test_nonpositive_eta_rejected(blocks1):
    b = blocks1
    with pytest.raises(ValueError):
        assemble_blocks(b.space, b.mesh2d, b.pieces, MaterialFields(eta=0.0))
