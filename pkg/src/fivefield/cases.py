"""The four benchmark configurations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .assembly import MaterialFields
from .mesh import BoxDomain, Dirichlet, FractureGeometry
from .reference import EquiDim2DCase, Strip

D_THICKNESS = 1e-2


@dataclass(frozen=True)
class MeshLevel:
    """Cells per axis of the box mesh and of the fracture grid."""

    n3: tuple
    nf: tuple


@dataclass(frozen=True)
class CaseDefinition:
    """A benchmark problem.

    `analytic` (optional) maps ``(x, side)`` to ``(value, gradient)`` of the
    matrix pressure; `analytic_F` gives the fracture pressure at
    fracture-frame points. `lines` are 3D sampling segments and `reference`
    the matching 2D equi-dimensional problem with `to_plane` mapping 3D
    points to its coordinates.
    """

    name: str
    box: BoxDomain
    fracture: FractureGeometry
    materials: MaterialFields
    levels: tuple
    tol: float = 1e-7
    max_iters: int = 2000
    analytic: Optional[Callable] = None
    analytic_F: Optional[Callable] = None
    reference: Optional[EquiDim2DCase] = None
    lines: tuple = ()
    line_labels: tuple = ()
    to_plane: Optional[Callable] = None
    slice_plane: Optional[tuple] = None
    notes: dict = field(default_factory=dict)


CUBE_LEVELS = (
    MeshLevel((4, 4, 5), (7, 7)),
    MeshLevel((9, 9, 9), (13, 13)),
    MeshLevel((19, 19, 19), (26, 26)),
    MeshLevel((39, 39, 39), (52, 52)),
)

_SQUARE = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def _horizontal_fracture():
    return FractureGeometry(origin=[0.0, 0.0, 0.0], u=[1.0, 0.0, 0.0], v=[0.0, 1.0, 0.0], polygon=_SQUARE)


def _test0_exact(x, side):
    val = x[:, 2] + np.asarray(side, dtype=float)
    grad = np.zeros_like(x)
    grad[:, 2] = 1.0
    return val, grad


def _test1_exact(x, side):
    z = x[:, 2]
    up = np.asarray(side, dtype=float) > 0
    val = np.where(up, np.exp(z), -np.exp(-z))
    grad = np.zeros_like(x)
    grad[:, 2] = np.where(up, np.exp(z), np.exp(-z))
    return val, grad


def _test1_source(x, side):
    z = x[:, 2]
    return np.where(np.asarray(side) > 0, -np.exp(z), np.exp(-z))


def _zero_F(xf):
    return np.zeros(len(np.atleast_2d(xf)))


def test0() -> CaseDefinition:
    box = BoxDomain([-1, -1, -1], [1, 1, 1], {"z-": Dirichlet(-2.0), "z+": Dirichlet(2.0)})
    return CaseDefinition(
        name="test0", box=box, fracture=_horizontal_fracture(),
        materials=MaterialFields(K_D=1.0, K_F=1.0, eta=1.0), levels=CUBE_LEVELS,
        tol=1e-12, analytic=_test0_exact, analytic_F=_zero_F,
        slice_plane=((0.0, -1.0, -1.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (2.0, 2.0)),
    )


def test1() -> CaseDefinition:
    e = float(np.e)
    box = BoxDomain([-1, -1, -1], [1, 1, 1], {"z-": Dirichlet(-e), "z+": Dirichlet(e)})
    return CaseDefinition(
        name="test1", box=box, fracture=_horizontal_fracture(),
        materials=MaterialFields(K_D=1.0, K_F=1.0, eta=1.0, g=_test1_source), levels=CUBE_LEVELS,
        analytic=_test1_exact, analytic_F=_zero_F,
        slice_plane=((0.0, -1.0, -1.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (2.0, 2.0)),
    )


def _barrier(xf):
    x = np.atleast_2d(xf)[:, 0]
    return (x > 0.25) & (x < 0.75)


def test2(d: float = D_THICKNESS) -> CaseDefinition:
    box = BoxDomain([0, 0, 0], [1, 2, 1], {"y-": Dirichlet(0.0), "y+": Dirichlet(1.0)})
    frac = FractureGeometry(origin=[0.0, 1.0, 0.0], u=[1.0, 0.0, 0.0], v=[0.0, 0.0, 1.0],
                            polygon=np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
    mat = MaterialFields(
        K_D=1.0,
        K_F=lambda xf: np.where(_barrier(xf), 2e-3 * d, d),
        eta=lambda xf: np.where(_barrier(xf), 2e-3 / d, 1.0 / d),
    )
    strip = Strip(
        normal_axis=1, center=1.0, width=d, t_range=(-np.inf, np.inf),
        k_t=lambda s: np.where((s > 0.25) & (s < 0.75), 2e-3, 1.0),
        k_n=lambda s: np.where((s > 0.25) & (s < 0.75), 2e-3, 1.0),
        breakpoints=(0.25, 0.75),
    )
    ref = EquiDim2DCase(lo=(0.0, 0.0), hi=(1.0, 2.0), strip=strip, K=1.0, dirichlet={"y-": 0.0, "y+": 1.0})
    xs = (0.1, 0.3, 0.5, 0.7, 0.9)
    return CaseDefinition(
        name="test2", box=box, fracture=frac, materials=mat,
        levels=(MeshLevel((10, 19, 10), (12, 13)), MeshLevel((20, 39, 20), (24, 26))),
        reference=ref,
        lines=tuple(((x, 0.0, 0.5), (x, 2.0, 0.5)) for x in xs),
        line_labels=tuple(f"x={x}" for x in xs),
        to_plane=lambda p: np.asarray(p)[:, :2],
        slice_plane=((0.0, 0.0, 0.5), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (1.0, 2.0)),
    )


def test3(d: float = D_THICKNESS) -> CaseDefinition:
    box = BoxDomain([0, 0, 0], [1, 1, 1], {"x-": Dirichlet(0.0), "x+": Dirichlet(1.0)})
    frac = FractureGeometry(origin=[0.5, 0.0, 0.0], u=[0.0, 1.0, 0.0], v=[0.0, 0.0, 1.0],
                            polygon=np.array([[0.0, 0.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]),
                            interior_edges=(1, 2))
    mat = MaterialFields(K_D=1.0, K_F=1e-7 * d, eta=1e-7 / d)
    strip = Strip(normal_axis=0, center=0.5, width=d, t_range=(-np.inf, 0.5),
                  k_t=lambda s: 1e-7, k_n=lambda s: 1e-7)
    ref = EquiDim2DCase(lo=(0.0, 0.0), hi=(1.0, 1.0), strip=strip, K=1.0, dirichlet={"x-": 0.0, "x+": 1.0},
                        h_strip=1e-3)
    ys = (0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    return CaseDefinition(
        name="test3", box=box, fracture=frac, materials=mat,
        levels=(MeshLevel((15, 16, 16), (20, 20)), MeshLevel((31, 32, 32), (40, 40))),
        reference=ref,
        lines=tuple(((0.0, y, 0.5), (1.0, y, 0.5)) for y in ys),
        line_labels=tuple(f"y={y}" for y in ys),
        to_plane=lambda p: np.asarray(p)[:, :2],
        slice_plane=((0.0, 0.0, 0.5), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (1.0, 1.0)),
    )


CASES = {"test0": test0, "test1": test1, "test2": test2, "test3": test3}


def get_case(name: str) -> CaseDefinition:
    try:
        return CASES[name]()
    except KeyError:
        raise ValueError(f"unknown case {name!r}; expected one of {sorted(CASES)}") from None
