import math

import numpy as np
import pytest
from scipy.optimize import brentq

from ernwave.geometry import BackgroundERN, radius_from_rstar, tortoise, tortoise_x
from ernwave.grid import EvolutionGrid, GridSpec
from ernwave.modes import ConfigurationError, build_angular_grid


def _grid(compactify, n_u=400, n_v=200, h=0.5, u0=0.0, v0=0.0):
    return EvolutionGrid(GridSpec(u0, v0, n_u, n_v, h, compactify), build_angular_grid(0),
                         BackgroundERN(1.0))


def test_corner_radius_matches_independent_root(bg):
    g = _grid(False)
    ref = brentq(lambda r: r - 1 - 1 / (r - 1) + 2 * math.log(r - 1), 1.0001, 10.0, xtol=1e-15)
    assert g.r_points(0, 0) == pytest.approx(ref, rel=1e-12)
    assert ref == pytest.approx(2.0, rel=1e-12)


def test_tables_agree_with_geometry(bg):
    g = _grid(False, n_u=60, n_v=40, h=0.7, u0=-10.0)
    t = g.tables()
    I, J = np.meshgrid(np.arange(61), np.arange(41), indexing="ij")
    rstar = 0.5 * (g.v[J] - g.xi[I])
    assert np.allclose(t["rstar"], rstar, rtol=0, atol=1e-11 * np.maximum(1, np.abs(rstar)).max())
    for (i, j) in [(0, 0), (30, 5), (60, 40), (45, 0)]:
        assert t["r"][i, j] == pytest.approx(radius_from_rstar(rstar[i, j], bg), rel=1e-12)
    assert np.allclose(t["D"], (1 - 1 / t["r"]) ** 2, rtol=1e-14)
    assert np.allclose(t["potential"], t["D"] * t["Dprime"] / t["r"], rtol=1e-14)


@pytest.mark.parametrize("compactify", [False, True])
def test_monotone_radius(compactify):
    g = _grid(compactify)
    I, J = np.meshgrid(np.arange(g.n_u + 1), np.arange(g.n_v + 1), indexing="ij")
    x = g.x_points(I, J)
    last = -1 if compactify else None
    assert np.all(np.diff(x[:last], axis=0) < 0)
    assert np.all(np.diff(x[:-1], axis=1) > 0)


def test_far_wing_asymptote():
    g = _grid(False, n_u=4000, n_v=10, h=0.5)
    x = g.x_points(4000, 0)  # u - v = 2000
    assert abs(x / 1e-3 - 1) < 0.05


def test_compactified_last_row_is_horizon():
    g = _grid(True)
    x = g.x_points(g.n_u, np.arange(g.n_v + 1))
    assert np.all(x == 0.0)
    assert math.isinf(g.u[-1])
    ud = g.ud_half(2 * g.n_u, np.zeros(3))
    assert np.allclose(ud, 2.0 / g.K, rtol=1e-14)


def test_compactified_rows_follow_tortoise():
    g = _grid(True, n_u=2000, n_v=100, h=0.4)
    for i in (int(g.u_s / g.h) + 5, g.n_u - 300, g.n_u - 3):
        u = g.u[i]
        for j in (0, 50, 100):
            x = g.x_points(i, j)
            assert tortoise_x(x, 1.0) == pytest.approx(0.5 * (g.v[j] - u), rel=1e-10)


def test_compactification_is_continuous_and_smooth():
    g = _grid(True, n_u=2000, n_v=10, h=0.4)
    i = int(math.floor(g.u_s / g.h))
    slope = np.diff(g.u[i - 2:i + 4]) / g.h
    assert np.all(np.abs(slope - 1.0) < 0.05)
    assert np.all(np.diff(g.u[:-1]) > 0)


def test_uniform_ud_equals_D():
    g = _grid(False, n_u=50, n_v=20, h=0.5)
    x = g.x_points(20, np.arange(21))
    assert np.allclose(g.ud_half(40, x), (x / (1 + x)) ** 2, rtol=1e-15)


def test_too_short_span_for_compactification():
    with pytest.raises(ConfigurationError):
        _grid(True, n_u=4, n_v=4, h=0.5)


def test_row_geometry_centres(bg):
    g = _grid(False, n_u=20, n_v=20, h=0.5, u0=-3.0)
    geo = g.row_geometry(5)
    rs = 0.5 * (g.v[:-1] + 0.25 - (g.xi[5] + 0.25))
    assert np.allclose(tortoise(geo.c_r, bg), rs, atol=1e-11)
