import math

import numpy as np
import pytest
import sympy as sp

from ernwave.backend import available_backends
from ernwave.data import InitialData, initial_data_bump
from ernwave.evolution import (
    OFF,
    SNAPSHOT_HEADER,
    EvolutionError,
    ManufacturedSolution,
    NonlinearityConfig,
    RecordPlan,
    _march,
    evolve,
    evolve_linear,
    evolve_manufactured,
    rhs_center,
    write_snapshot,
)
from ernwave.geometry import BackgroundERN
from ernwave.grid import EvolutionGrid, GridSpec
from ernwave.modes import ConfigurationError, build_angular_grid

A1 = NonlinearityConfig("constant", 1.0)
FULL = RecordPlan(full=True)


def small_grid(l_max=0, n_u=120, n_v=80, h=0.1, u0=0.0, v0=0.0, compactify=False):
    return EvolutionGrid(GridSpec(u0, v0, n_u, n_v, h, compactify), build_angular_grid(l_max),
                         BackgroundERN(1.0))


# -- right-hand side -----------------------------------------------------------

def test_rhs_zero_state(bg, ang4):
    z = np.zeros(ang4.n_modes)
    assert np.all(rhs_center(z, z, z, 1.7, A1, ang4, bg) == 0)


def test_rhs_linear_dipole_hand_value(bg):
    ang = build_angular_grid(1)
    phi = np.array([0.0, 1.0])
    out = rhs_center(phi, np.zeros(2), np.zeros(2), 2.0, OFF, ang, bg)
    assert out[1] == pytest.approx(-0.0390625, abs=1e-15)
    assert out[0] == 0.0


def test_rhs_linear_is_mode_diagonal(bg, ang4, rng):
    phi = rng.standard_normal(ang4.n_modes)
    r = 1.9
    D, Dp = (1 - 1 / r) ** 2, 2 * (r - 1) / r**3
    expect = 0.25 * D * (-(ang4.ells * (ang4.ells + 1)) / r**2 - Dp / r) * phi
    out = rhs_center(phi, rng.standard_normal(5), rng.standard_normal(5), r, OFF, ang4, bg)
    assert np.allclose(out, expect, rtol=1e-14)


def _null_form_oracle(phi_n, Lphi_n, PhiH_n, r_n, A):
    """Nonlinear part of L Lbar (r psi) for Box psi = A g(dpsi, dpsi), built symbolically."""
    u, v = sp.symbols("u v")
    M = 1
    r = sp.Function("r")(u, v)
    phi = sp.Function("phi")(u, v)
    psi = phi / r
    D = (1 - M / r) ** 2
    # inverse of g = -D du dv on the (u, v) block
    ginv = sp.Matrix([[0, -2 / D], [-2 / D, 0]])
    grad = sp.Matrix([sp.diff(psi, u), sp.diff(psi, v)])
    G = (grad.T * ginv * grad)[0]
    # Box psi = -(4/(D r)) d_u d_v (r psi) + linear terms, so the source enters as -(D r/4) A G
    expr = -(D * r / 4) * A * G
    r_s, f, fu, fv = sp.symbols("r_s f f_u f_v")
    subs = {
        sp.Derivative(r, u): -D / 2,
        sp.Derivative(r, v): D / 2,
    }
    expr = expr.subs(subs)
    expr = expr.subs({sp.Derivative(phi, u): fu, sp.Derivative(phi, v): fv})
    expr = expr.subs({phi: f}).subs({r: r_s})
    Dn = (1 - 1 / r_n) ** 2
    Lbar = Dn * PhiH_n / (2 * r_n)
    return float(expr.subs({r_s: r_n, f: phi_n, fu: Lbar, fv: Lphi_n}).evalf(30))


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_rhs_null_form_matches_symbolic_oracle(bg, seed):
    rng = np.random.default_rng(seed)
    ang = build_angular_grid(0)
    phi_n, L_n, H_n = rng.uniform(-0.3, 0.3, 3)
    r = float(rng.uniform(1.05, 4.0))
    A = 1.7
    s2 = math.sqrt(2.0)
    coeff = lambda x: np.array([x * s2])  # noqa: E731  nodal value -> orthonormal coefficient
    cfg = NonlinearityConfig("constant", A)
    nl = (rhs_center(coeff(phi_n), coeff(L_n), coeff(H_n), r, cfg, ang, bg)
          - rhs_center(coeff(phi_n), coeff(L_n), coeff(H_n), r, OFF, ang, bg))[0] / s2
    assert nl == pytest.approx(_null_form_oracle(phi_n, L_n, H_n, r, A), rel=1e-12)


def test_rhs_rejects_interior(bg, ang4):
    z = np.zeros(5)
    with pytest.raises(ConfigurationError):
        rhs_center(z, z, z, 0.9, A1, ang4, bg)


def test_nonlinearity_config_validation():
    with pytest.raises(ConfigurationError):
        NonlinearityConfig("sometimes")
    with pytest.raises(ConfigurationError):
        NonlinearityConfig("constant", 1.0, "cubic")


# -- structural properties --------------------------------------------------------

def test_zero_data_gives_zero_field():
    g = small_grid(2)
    fld = evolve(g, InitialData(0.0, 2.0, 0.5), A1, FULL)
    assert np.all(fld.phi == 0) and np.all(fld.PhiH == 0)


def test_linear_superposition():
    g = small_grid(2)
    d1 = InitialData(0.05, 1.8, 0.4, (1.0, 0.5))
    d2 = InitialData(0.03, 2.3, 0.6, (0.2, 0.0, 1.0))
    a = [x + y for x, y in zip(initial_data_bump(d1, g), initial_data_bump(d2, g))]
    both = _march(g, *a, OFF, FULL, None)
    f1 = evolve_linear(g, d1, FULL)
    f2 = evolve_linear(g, d2, FULL)
    scale = np.max(np.abs(both.phi))
    assert np.max(np.abs(both.phi - f1.phi - f2.phi)) < 1e-13 * scale
    f3 = evolve_linear(g, d1.scaled(2.0), FULL)
    assert np.max(np.abs(f3.phi - 2 * f1.phi)) < 1e-15 * scale


def test_linear_sector_decoupling():
    g = small_grid(3)
    fld = evolve_linear(g, InitialData(0.05, 2.0, 0.5, (0.0, 1.0)), FULL)
    assert np.max(np.abs(fld.phi[..., 1])) > 1e-4
    for ell in (0, 2, 3):
        assert np.max(np.abs(fld.phi[..., ell])) < 1e-12
        assert np.max(np.abs(fld.PhiH[..., ell])) < 1e-12


@pytest.mark.parametrize("compactify", [False, True])
def test_spherical_symmetry_preserved(compactify):
    n_u = 1200 if compactify else 120
    g = small_grid(4, n_u=n_u, h=0.1 if not compactify else 0.2, compactify=compactify)
    fld = evolve(g, InitialData(0.05, 2.0, 0.5), A1, FULL)
    scale = np.max(np.abs(fld.phi[..., 0]))
    assert np.max(np.abs(fld.phi[..., 1:])) <= 1e-14 * scale


def test_domain_of_dependence():
    g = small_grid(1)
    base = InitialData(0.05, 2.2, 0.3, (1.0, 0.4))
    cols = initial_data_bump(base, g)
    # extra data on the ingoing ray at r < 1.5, i.e. at late u only
    col_phi, col_PH, row_phi = (c.copy() for c in cols)
    extra = initial_data_bump(InitialData(0.05, 1.3, 0.15, (1.0, 0.4)), g)
    rows_touched = np.flatnonzero(np.any(extra[0] != 0, axis=1))
    first = rows_touched.min()
    col_phi += extra[0]
    col_PH += extra[1]
    f0 = _march(g, *cols, A1, FULL, None)
    f1 = _march(g, col_phi, col_PH, row_phi, A1, FULL, None)
    assert np.array_equal(f0.phi[:first], f1.phi[:first])
    assert not np.array_equal(f0.phi[first:], f1.phi[first:])


def test_translation_invariance():
    a = small_grid(0)
    b = small_grid(0, u0=3.0, v0=3.0)
    d = InitialData(0.05, 2.0, 0.5)
    fa = evolve(a, d, A1, FULL)
    fb = evolve(b, d, A1, FULL)
    assert np.max(np.abs(fa.phi - fb.phi)) < 1e-13 * np.max(np.abs(fa.phi))


def test_determinism():
    g = small_grid(2)
    d = InitialData(0.05, 2.0, 0.5, (1.0, 0.5))
    f1 = evolve(g, d, A1, FULL)
    f2 = evolve(g, d, A1, FULL)
    assert np.array_equal(f1.phi, f2.phi) and np.array_equal(f1.PhiH, f2.PhiH)


@pytest.mark.skipif("compiled" not in available_backends(), reason="extension not built")
@pytest.mark.parametrize("cfg", [OFF, A1, NonlinearityConfig("sample_smooth")])
def test_backends_agree(cfg):
    g = small_grid(2, n_u=60, n_v=40)
    d = InitialData(0.05, 2.0, 0.4, (1.0, 0.5))
    fc = evolve(g, d, cfg, FULL, backend="compiled")
    fp = evolve(g, d, cfg, FULL, backend="python")
    assert fc.backend == "compiled" and fp.backend == "python"
    scale = np.max(np.abs(fc.phi))
    assert np.max(np.abs(fc.phi - fp.phi)) < 1e-13 * scale
    assert np.max(np.abs(fc.PhiH - fp.PhiH)) < 1e-12 * np.max(np.abs(fc.PhiH))


def test_recorded_rows_match_full_run():
    g = small_grid(1, n_u=1200, n_v=60, h=0.2, compactify=True)
    d = InitialData(0.05, 1.5, 1.0, (1.0, 0.3))
    full = evolve(g, d, A1, FULL)
    part = evolve(g, d, A1, RecordPlan(rows=(100, 101), cols=(20,), tail_rows=3))
    for i in (100, 101, g.n_u - 2, g.n_u):
        assert np.array_equal(part.row(i)[0], full.phi[i])
    assert np.array_equal(part.col(20)[1], full.PhiH[:, 20])
    with pytest.raises(KeyError):
        part.row(50)


def test_manufactured_solution_second_order():
    errs = []
    for h in (0.1, 0.05, 0.025):
        n = int(round(12 / h))
        g = small_grid(1, n_u=n, n_v=n, h=h, u0=-6.0, v0=0.0)
        sol = ManufacturedSolution(0.05, 0.1, 3.0, 1.0, (1.0, 0.5))
        _, err = evolve_manufactured(g, sol, A1)
        errs.append(err)
    orders = [math.log2(errs[k] / errs[k + 1]) for k in range(2)]
    assert all(abs(p - 2.0) < 0.2 for p in orders), orders


def test_large_data_fails_loudly():
    g = small_grid(0, h=0.2)
    with pytest.raises(EvolutionError) as info:
        evolve(g, InitialData(400.0, 2.0, 0.5), A1, FULL)
    assert info.value.u is not None and info.value.v is not None


def test_snapshot_round_trip(tmp_path):
    g = small_grid(1, n_u=20, n_v=10)
    fld = evolve(g, InitialData(0.05, 1.8, 0.3, (1.0, 0.5)), A1, FULL)
    path = tmp_path / "snap.csv"
    write_snapshot(fld, path)
    lines = path.read_text().splitlines()
    assert lines[0] == SNAPSHOT_HEADER
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    assert data.shape == (21 * 11 * 2, 8)
    phi = data[:, 4].reshape(21, 11, 2)
    assert np.array_equal(phi, fld.phi)
