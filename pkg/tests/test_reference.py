from __future__ import annotations

import csv
import dataclasses

import numpy as np
import pytest

from fivefield.cases import get_case
from fivefield.reference import (
    EquiDim2DCase,
    MeshGenerationError,
    Strip,
    graded_axis,
    sample_on_lines,
    solve_equidim_2d,
    write_line_csv,
)


def _strip(axis=0, kt=1.0, kn=1.0, t_range=(-np.inf, np.inf), width=0.05):
    return Strip(axis, 0.4, width, t_range, lambda t: kt + 0 * t, lambda t: kn + 0 * t)


def test_homogeneous_ramp_is_exact(rng):
    case = EquiDim2DCase((0, 0), (1, 2), _strip(axis=1, t_range=(0.2, 0.7)), dirichlet={"y-": 0.0, "y+": 1.0}, h_out=0.05)
    ref = solve_equidim_2d(case)
    p = rng.uniform([0, 0], [1, 2], (500, 2))
    assert np.abs(ref.evaluate(p) - p[:, 1] / 2).max() <= 1e-12


def test_series_resistance_across_strip(rng):
    # strip across x with normal conductivity kn: piecewise linear profile
    kn, w, c = 0.1, 0.05, 0.4
    case = EquiDim2DCase((0, 0), (1, 1), _strip(axis=0, kn=kn, width=w), dirichlet={"x-": 0.0, "x+": 1.0}, h_out=0.05)
    ref = solve_equidim_2d(case)
    q = 1.0 / ((1 - w) + w / kn)
    x0, x1 = c - w / 2, c + w / 2

    def exact(x):
        return np.where(x < x0, q * x, np.where(x < x1, q * x0 + q / kn * (x - x0), q * x0 + q / kn * w + q * (x - x1)))

    p = rng.uniform(0, 1, (500, 2))
    assert np.abs(ref.evaluate(p) - exact(p[:, 0])).max() <= 1e-11


def test_constant_data_gives_constant():
    case = EquiDim2DCase((0, 0), (1, 1), _strip(kt=50.0, kn=0.01), dirichlet={"x-": 0.3, "y+": 0.3}, h_out=0.1)
    assert np.allclose(solve_equidim_2d(case).values, 0.3, atol=1e-12)


@pytest.mark.parametrize("name", ["test2", "test3"])
def test_maximum_principle(name):
    ref = solve_equidim_2d(get_case(name).reference)
    assert ref.values.min() >= -1e-12 and ref.values.max() <= 1 + 1e-12


def test_strip_refinement_is_converged():
    case = get_case("test2").reference
    fine = dataclasses.replace(case, h_strip=case.strip.width / 20, h_out=case.h_out / 2)
    segs = get_case("test2").lines
    segs2d = [(a[:2], b[:2]) for a, b in segs]
    coarse = sample_on_lines(solve_equidim_2d(case), segs2d, 100)
    finer = sample_on_lines(solve_equidim_2d(fine), segs2d, 100)
    for (_, v0), (_, v1) in zip(coarse, finer):
        assert np.abs(v0 - v1).max() <= 1e-2 * np.abs(v1).max()


def test_graded_axis():
    x = graded_axis(0.0, 1.0, [(0.3, 0.32, 0.004), (0.8, 0.8, 0.01)], 0.05, 1.2)
    assert x[0] == 0 and x[-1] == 1 and np.all(np.diff(x) > 0)
    for p in (0.3, 0.32, 0.8):
        assert np.min(np.abs(x - p)) == 0
    dx = np.diff(x)
    inside = (x[:-1] >= 0.3) & (x[1:] <= 0.32)
    assert dx[inside].max() <= 0.004 + 1e-12 and dx.max() <= 0.05 + 1e-12


def test_invalid_inputs():
    with pytest.raises(ValueError):
        EquiDim2DCase((0, 0), (1, 1), _strip(), dirichlet={})
    with pytest.raises(ValueError):
        EquiDim2DCase((0, 0), (1, 1), dataclasses.replace(_strip(), center=0.99), dirichlet={"x-": 0.0})
    with pytest.raises(MeshGenerationError):
        solve_equidim_2d(EquiDim2DCase((0, 0), (1, 1), _strip(), dirichlet={"x-": 0.0}, h_strip=0.04))
    ref = solve_equidim_2d(EquiDim2DCase((0, 0), (1, 1), _strip(), dirichlet={"x-": 0.0}, h_out=0.1))
    with pytest.raises(ValueError):
        ref.evaluate(np.array([[1.5, 0.5]]))


def test_line_csv(tmp_path):
    ref = solve_equidim_2d(EquiDim2DCase((0, 0), (1, 1), _strip(), dirichlet={"x-": 0.0, "x+": 1.0}, h_out=0.1))
    samples = sample_on_lines(ref, [((0, 0.5), (1, 0.5))], 11)
    write_line_csv(tmp_path / "l.csv", ["y=0.5"], samples, extra={"ours": [samples[0][1] * 2]})
    rows = list(csv.DictReader(open(tmp_path / "l.csv")))
    assert len(rows) == 11 and rows[0]["line"] == "y=0.5"
    assert float(rows[-1]["s"]) == 1.0 and float(rows[-1]["value"]) == pytest.approx(1.0)
    assert float(rows[5]["ours"]) == pytest.approx(2 * float(rows[5]["value"]))
