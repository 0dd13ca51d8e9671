from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bankpide.errors import InvalidMesh
from bankpide.grid import (IDENTITY, SQRT, Axis, Grid2D, build_clustered_axis, build_time_grid, cell_average,
                           cell_average_1d, cell_bounds)


def test_uniform_axis_without_centers():
    ax = build_clustered_axis(100, 10.0)
    assert np.allclose(ax.spacings, 0.1, atol=1e-14)


def test_single_center_monotone_spacing():
    ax = build_clustered_axis(100, 10.0, [0.0], 0.25)
    h = ax.spacings
    assert h[0] < 0.1 < h[-1]
    assert np.all(np.diff(h) > 0)


def test_axis_invariants_rejected():
    with pytest.raises(InvalidMesh):
        Axis(np.array([0.1, 0.2, 0.3]))
    with pytest.raises(InvalidMesh):
        Axis(np.array([0.0, 0.2, 0.1]))
    with pytest.raises(InvalidMesh):
        build_clustered_axis(8, 10.0)
    with pytest.raises(InvalidMesh):
        build_clustered_axis(100, 10.0, [11.0], 0.2)


@given(m=st.integers(16, 200), c1=st.floats(0.0, 10.0), c2=st.floats(0.0, 10.0), beta=st.floats(0.3, 2.0))
def test_clustered_axis_invariants(m, c1, c2, beta):
    try:
        ax = build_clustered_axis(m, 10.0, sorted({c1, c2}), beta)
    except InvalidMesh:
        return
    x = ax.nodes
    assert x[0] == 0.0 and x[-1] == 10.0
    assert np.all(np.diff(x) > 0)
    assert ax.max_ratio() <= 2.0


def test_nested_refinement():
    a = build_clustered_axis(50, 10.0, [0.0, 1.4, 3.0], 0.25)
    b = build_clustered_axis(100, 10.0, [0.0, 1.4, 3.0], 0.25)
    assert np.allclose(b.nodes[::2], a.nodes, atol=1e-12)


def test_time_grid_examples():
    tg = build_time_grid(1.0, 4, IDENTITY)
    assert np.allclose(tg.t, [0, 0.25, 0.5, 0.75, 1])
    tg = build_time_grid(1.0, 4, SQRT)
    assert np.allclose(tg.t, [0, 1 / 16, 1 / 4, 9 / 16, 1])
    for tr in (IDENTITY, SQRT):
        assert np.allclose(build_time_grid(2.5, 1, tr).t, [0, 2.5])
    with pytest.raises(ValueError):
        build_time_grid(1.0, 0)


@given(N=st.integers(2, 200), Tbar=st.floats(0.01, 10.0))
def test_sqrt_steps_increase(N, Tbar):
    tg = build_time_grid(Tbar, N, SQRT)
    assert np.all(np.diff(np.diff(tg.t)) > 0)
    assert np.allclose(np.diff(tg.tau), tg.dtau)


def uniform_grid(m=20, L=2.0):
    ax = Axis(np.linspace(0.0, L, m + 1))
    return Grid2D(ax, ax)


def test_cell_average_indicator_at_node():
    g = uniform_grid()
    mu = g.axis1.nodes[10]
    V = cell_average(lambda x, y: (x >= mu).astype(float), g)
    assert V[10, 5] == pytest.approx(0.5, abs=1e-12)
    V = cell_average(lambda x, y: ((x >= mu) & (y >= mu)).astype(float), g)
    assert V[10, 10] == pytest.approx(0.25, abs=1e-12)


def test_cell_average_linear_exact():
    g = Grid2D(build_clustered_axis(40, 5.0, [1.0], 0.3), build_clustered_axis(30, 5.0, [2.0], 0.3))
    X1, X2 = g.mesh()
    V = cell_average(lambda x, y: x + y, g)
    interior = (slice(1, -1), slice(1, -1))
    # cell means of a linear function are its values at the cell centres
    lo1, hi1 = cell_bounds(g.axis1)
    lo2, hi2 = cell_bounds(g.axis2)
    C = 0.5 * (lo1 + hi1)[:, None] + 0.5 * (lo2 + hi2)[None, :]
    assert np.allclose(V, C, atol=1e-12)
    u = Grid2D(Axis(np.linspace(0, 2, 21)), Axis(np.linspace(0, 2, 21)))
    U1, U2 = u.mesh()
    assert np.allclose(cell_average(lambda x, y: x + y, u)[interior], (U1 + U2)[interior], atol=1e-12)


@given(mu1=st.floats(0.1, 1.9), mu2=st.floats(0.1, 1.9))
def test_cell_average_indicator_bounds_and_area(mu1, mu2):
    g = uniform_grid()
    V = cell_average(lambda x, y: ((x >= mu1) & (y >= mu2)).astype(float), g)
    assert V.min() >= -1e-14 and V.max() <= 1 + 1e-14
    lo, hi = cell_bounds(g.axis1)
    w = hi - lo
    area = float(w @ V @ w)
    assert area == pytest.approx((2 - mu1) * (2 - mu2), abs=2 * 0.1 ** 2)


def test_cell_average_1d():
    ax = Axis(np.linspace(0.0, 1.0, 11))
    V = cell_average_1d(lambda x: (x >= 0.5).astype(float), ax)
    assert V[5] == pytest.approx(0.5, abs=1e-12)
    V = cell_average_1d(lambda x: x * x, ax)
    lo, hi = cell_bounds(ax)
    assert np.allclose(V, (hi ** 3 - lo ** 3) / (3 * (hi - lo)), atol=1e-14)
