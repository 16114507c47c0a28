"""Diagnostics on completed fields: horizon series, charges, fluxes, fits.

The foliation is null-null: ``Sigma_tau = {v = tau, u >= u_R} U {u = u_R, v >= tau}``
with ``r(u_R, tau) = R``.  The ingoing piece carries the near-horizon
``(r-M)^-p`` flux, the outgoing piece the T-flux on ``[R, r1]`` and the
``r^p`` flux beyond ``r1``.

Sphere integrals of squared zonal coefficients use ``int f^2 domega = 2 pi sum a_l^2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .evolution import SECTORS, Field, RecordPlan, _Recorder
from .geometry import couch_torrence, tortoise_x
from .modes import ConfigurationError, synthesize

__all__ = [
    "CTResidual",
    "DataError",
    "FluxPieces",
    "FluxRangeError",
    "HorizonSeries",
    "PowerLawFit",
    "ResolutionError",
    "ScalingReport",
    "ct_duality_residual",
    "epsilon_scaling_report",
    "fit_power_law",
    "flux_table",
    "foliation_indices",
    "hnl0_charge",
    "horizon_series",
    "master_energy",
    "morawetz_bulk",
    "relative_drift",
    "richardson_order",
    "weighted_flux",
]

HORIZON_HEADER = "v,r_minus_M,psi,Tpsi,dtheta_psi,PhiH,PhiH2,PhiH2_weighted,HNL0"
FLUX_HEADER = "tau,p,l,sector,variant,near,mid,far,bulk"
FIT_HEADER = "quantity,window_lo,window_hi,exponent,stderr,amplitude,residual_rms"

R_DEFAULT = 1.8
R1_DEFAULT = 2.5
_SQRT2 = math.sqrt(2.0)


class DataError(ValueError):
    """Input series unusable for the requested estimate."""


class FluxRangeError(ValueError):
    """Foliation slice or region not covered by the recorded lattice."""


class ResolutionError(ArithmeticError):
    """Signal indistinguishable from roundoff."""


# -- horizon series -------------------------------------------------------

@dataclass
class HorizonSeries:
    """Time series along one outgoing row (the horizon row by default).

    ``PhiH`` is obtained by differencing ``phi`` across rows; ``PhiH_carried``
    is the transported auxiliary.  Scalar columns are spherical means.
    """

    row: int
    u: float
    v: np.ndarray
    r_minus_M: np.ndarray
    psi: np.ndarray
    Tpsi: np.ndarray
    dtheta_psi: np.ndarray
    PhiH: np.ndarray
    PhiH2: np.ndarray
    PhiH2_weighted: np.ndarray
    HNL0: np.ndarray
    PhiH_carried: np.ndarray
    delta: float = 1.0

    columns = ("v", "r_minus_M", "psi", "Tpsi", "dtheta_psi", "PhiH", "PhiH2",
               "PhiH2_weighted", "HNL0")

    def table(self) -> np.ndarray:
        return np.column_stack([getattr(self, c) for c in self.columns])


def _xi_derivative(fld: Field, i: int, which: int):
    """d/dxi at row ``i`` of ``phi`` (which=0) or ``PhiH`` (which=1), second order."""
    g = fld.grid
    n = g.n_u
    h = g.h
    if 0 < i < n and fld.has_row(i - 1) and fld.has_row(i + 1):
        return (fld.row(i + 1)[which] - fld.row(i - 1)[which]) / (2.0 * h)
    if i >= 2 and fld.has_row(i - 1) and fld.has_row(i - 2):
        f0, f1, f2 = fld.row(i)[which], fld.row(i - 1)[which], fld.row(i - 2)[which]
        return (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * h)
    if i + 2 <= n and fld.has_row(i + 1) and fld.has_row(i + 2):
        f0, f1, f2 = fld.row(i)[which], fld.row(i + 1)[which], fld.row(i + 2)[which]
        return (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)
    raise ConfigurationError(f"need three consecutive recorded rows around row {i}")


def hnl0_charge(psi, drpsi, angular, mass: float = 1.0):
    """``int_S2 [exp(-psi) d_r psi + (1 - exp(-psi))/M] domega``.

    ``psi`` and ``drpsi`` are nodal values with the node axis last.
    """
    psi = np.asarray(psi, dtype=float)
    drpsi = np.asarray(drpsi, dtype=float)
    integrand = np.exp(-psi) * drpsi - np.expm1(-psi) / mass
    return 2.0 * np.pi * (integrand @ angular.weights)


def horizon_series(fld: Field, delta: float = 1.0, row: int = -1) -> HorizonSeries:
    g = fld.grid
    M = g.bg.mass
    i = int(row) % (g.n_u + 1)
    if g.n_u + 1 < 3:
        raise ConfigurationError("need at least three rows for one-sided stencils")
    jv = np.arange(g.n_v + 1)
    x = g.x_points(i, jv)
    r = M + x
    D = (x / r) ** 2
    UD = g.ud_half(2 * i, x)[:, None]
    rc = r[:, None]
    phi, PhiH_c = fld.row(i)
    PhiH = 2.0 * rc * _xi_derivative(fld, i, 0) / UD
    PhiH2 = 2.0 * rc * _xi_derivative(fld, i, 1) / UD
    dv_phi = np.gradient(phi, g.h, axis=0)
    Tphi = dv_phi + (D / (2.0 * r))[:, None] * PhiH
    ang = g.angular
    psi_n = synthesize(phi / rc, ang)
    drpsi_n = synthesize(-(PhiH + phi) / rc**2, ang)
    dth = np.max(np.abs((phi / rc) @ ang.dtheta), axis=1)
    if float(delta) in fld.weighted_max:
        weighted = fld.weighted_max[float(delta)].copy()
    else:
        mag = np.max(np.abs(synthesize(PhiH2, ang)), axis=1)
        weighted = D ** (0.5 * (1.0 - delta)) * mag
    return HorizonSeries(
        row=i,
        u=float(g.u_of_xi(g.xi[i])),
        v=g.v.copy(),
        r_minus_M=x,
        psi=phi[:, 0] / _SQRT2 / r,
        Tpsi=Tphi[:, 0] / _SQRT2 / r,
        dtheta_psi=dth,
        PhiH=PhiH[:, 0] / _SQRT2,
        PhiH2=PhiH2[:, 0] / _SQRT2,
        PhiH2_weighted=weighted,
        HNL0=hnl0_charge(psi_n, drpsi_n, ang, M),
        PhiH_carried=PhiH_c[:, 0] / _SQRT2,
        delta=float(delta),
    )


def relative_drift(v, y, v_lo):
    """``max |y(v) - y(v_lo)| / |y(v_lo)|`` over ``v >= v_lo``."""
    v = np.asarray(v, float)
    y = np.asarray(y, float)
    k = int(np.searchsorted(v, v_lo))
    ref = y[k]
    if ref == 0:
        raise DataError("reference value is zero; relative drift undefined")
    return float(np.max(np.abs(y[k:] - ref)) / abs(ref))


def richardson_order(coarse, mid, fine):
    """Observed order from three 2:1 levels (``log2`` of the successive-difference ratio)."""
    a = np.max(np.abs(np.asarray(coarse) - np.asarray(mid)))
    b = np.max(np.abs(np.asarray(mid) - np.asarray(fine)))
    if b == 0:
        return math.inf if a > 0 else math.nan
    return math.log2(a / b)


# -- power-law fits ----------------------------------------------------------

@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    amplitude: float
    window_lo: float
    window_hi: float
    residual_rms: float
    stderr: float
    n: int

    def row(self, quantity: str):
        return (quantity, self.window_lo, self.window_hi, self.exponent, self.stderr,
                self.amplitude, self.residual_rms)


def fit_power_law(t, y, window=None, min_samples: int = 8) -> PowerLawFit:
    """Least squares of ``log y`` against ``log t`` on ``window = (lo, hi)``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape:
        raise DataError("t and y must have equal length")
    if window is None:
        lo, hi = float(t.min()), float(t.max())
    else:
        lo, hi = map(float, window)
        if lo >= hi:
            raise ConfigurationError(f"empty fit window [{lo}, {hi}]")
        if lo < t.min() - 1e-12 * abs(t.min()) or hi > t.max() + 1e-12 * abs(t.max()):
            raise FluxRangeError(
                f"window [{lo:g}, {hi:g}] outside data range [{t.min():g}, {t.max():g}]")
    sel = (t >= lo) & (t <= hi)
    n = int(sel.sum())
    if n < min_samples:
        raise ConfigurationError(f"fit window holds {n} samples; need at least {min_samples}")
    ts, ys = t[sel], y[sel]
    if np.any(ts <= 0):
        raise DataError("power-law fits need t > 0")
    if np.any(~(ys > 0)):
        raise DataError("power-law fits need y > 0 throughout the window")
    X = np.column_stack([np.ones(n), np.log(ts)])
    ly = np.log(ys)
    coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
    res = ly - X @ coef
    rss = float(res @ res)
    cov = np.linalg.inv(X.T @ X) * (rss / (n - 2) if n > 2 else 0.0)
    return PowerLawFit(
        exponent=float(coef[1]),
        amplitude=float(math.exp(coef[0])),
        window_lo=float(ts.min()),
        window_hi=float(ts.max()),
        residual_rms=math.sqrt(rss / n),
        stderr=math.sqrt(max(cov[1, 1], 0.0)),
        n=n,
    )


def default_window(v, fraction: float = 0.6):
    """Last ``fraction`` of the ``v`` range."""
    v = np.asarray(v, float)
    return (float(v[-1] - fraction * (v[-1] - v[0])), float(v[-1]))


# -- epsilon scaling -----------------------------------------------------------

@dataclass(frozen=True)
class ScalingReport:
    ratio: float
    shift_a: float
    shift_b: float
    floor: float
    detected: bool
    message: str


def _shift_and_floor(s):
    if isinstance(s, Field):
        s = horizon_series(s)
    y = s.PhiH_carried
    shift = float(y[-1] - y[0])
    floor = len(y) * np.finfo(float).eps * float(np.max(np.abs(y)) + np.finfo(float).tiny)
    return shift, floor


def epsilon_scaling_report(run_a, run_b) -> ScalingReport:
    """Ratio of the l=0 horizon ``PhiH`` shifts of two runs (``eps`` and ``eps/2``).

    Accepts fields or horizon series.  The carried ``PhiH`` is used: in the
    linear flow it is exactly constant on the horizon, so any shift is
    nonlinear.
    """
    sa, fa = _shift_and_floor(run_a)
    sb, fb = _shift_and_floor(run_b)
    floor = max(fa, fb)
    if abs(sa) <= 10 * floor and abs(sb) <= 10 * floor:
        return ScalingReport(math.nan, sa, sb, floor, False, "no nonlinear shift detected")
    if abs(sb) <= 10 * floor:
        raise ResolutionError(
            f"denominator shift {sb:.3e} is below 10x the roundoff floor {floor:.3e}")
    ratio = sa / sb
    return ScalingReport(ratio, sa, sb, floor, True,
                         f"shift ratio {ratio:.6g} (quadratic scaling predicts 4)")


# -- fluxes --------------------------------------------------------------------

_P_WINDOWS = {
    ("0", "base"): (0.0, 3.0, False),
    ("0", "commuted"): (0.0, 1.0, False),
    (">=1", "base"): (0.0, 2.0, False),
    (">=1", "commuted"): (0.0, 2.0, True),
}


@dataclass(frozen=True)
class FluxPieces:
    tau: float
    p: float
    l: int
    sector: str
    variant: str
    near: float
    mid: float
    far: float
    R: float
    out_of_window: bool = False

    @property
    def total(self):
        return self.near + self.mid + self.far

    @property
    def horizon_side(self):
        """Near-horizon hierarchy plus the T-flux bridge."""
        return self.near + self.mid

    @property
    def infinity_side(self):
        return self.mid + self.far


def foliation_indices(grid, tau: float, R: float = R_DEFAULT):
    """Column of ``v = tau`` and the lattice row nearest ``r(u_R, tau) = R``."""
    M = grid.bg.mass
    h = grid.h
    j = int(round((tau - grid.spec.v0) / h))
    if j < 1 or j > grid.n_v - 1 or abs(grid.v[j] - tau) > 1e-9 * max(1.0, abs(tau)):
        raise FluxRangeError(f"tau={tau} is not an interior lattice column")
    if R <= M:
        raise FluxRangeError("R must exceed M")
    u_R = tau - 2.0 * tortoise_x(R - M, M)
    if u_R > grid.u_s:
        raise FluxRangeError("outgoing piece falls in the compactified rows")
    i = int(round((u_R - grid.spec.u0) / h))
    if i < 1 or i > grid.n_u - 1:
        raise FluxRangeError(f"tau={tau}: outgoing slice u={u_R:.6g} exits the lattice")
    return j, i


def _sector_sq(a, mask, weights=None):
    a = a[..., mask]
    if weights is not None:
        a = a * np.sqrt(weights[mask])
    return 2.0 * np.pi * np.sum(a * a, axis=-1)


def _Tcol(fld, j):
    """``T PhiH`` and ``T phi`` along column ``j`` (rows all)."""
    g = fld.grid
    phi_m, PH_m = fld.col(j - 1)
    phi_p, PH_p = fld.col(j + 1)
    phi, PH = fld.col(j)
    M = g.bg.mass
    x = g.x_points(np.arange(g.n_u + 1), j)
    r = M + x
    D = (x / r) ** 2
    UD = g.ud_half(2 * np.arange(g.n_u + 1), x)
    inv_up = np.where(UD > 0, D / np.where(UD > 0, UD, 1.0), 0.0)[:, None]
    TPH = (PH_p - PH_m) / (2 * g.h) + inv_up * np.gradient(PH, g.h, axis=0)
    Tphi = (phi_p - phi_m) / (2 * g.h) + inv_up * np.gradient(phi, g.h, axis=0)
    return Tphi, TPH


def _Trow(fld, i):
    g = fld.grid
    phi_m, PH_m = fld.row(i - 1)
    phi_p, PH_p = fld.row(i + 1)
    phi, PH = fld.row(i)
    # outgoing slices live in the uniform rows, where d/dxi = d/du
    Tphi = np.gradient(phi, g.h, axis=0) + (phi_p - phi_m) / (2 * g.h)
    return Tphi


def weighted_flux(fld: Field, tau: float, p: float, l: int = 0, sector: str = "all",
                  variant: str = "base", R: float = R_DEFAULT,
                  r1: float = R1_DEFAULT) -> FluxPieces:
    """Three-piece weighted flux through ``Sigma_tau``."""
    if l not in (0, 1):
        raise ConfigurationError("only l = 0 or 1 T-commutations are implemented")
    if variant not in ("base", "commuted"):
        raise ConfigurationError(f"variant must be 'base' or 'commuted', got {variant!r}")
    g = fld.grid
    M = g.bg.mass
    mask = np.isin(g.angular.ells, g.angular.sector_modes(sector))
    key = ("0" if sector == "0" else ">=1", variant)
    lo, hi, closed = _P_WINDOWS[key]
    out = not (lo < p < hi or (closed and p == hi))
    if out:
        warnings.warn(f"p={p} outside the admissible window for sector {sector} {variant}",
                      stacklevel=2)
    j, iR = foliation_indices(g, tau, R)
    h = g.h

    # ingoing piece v = tau, rows iR..n_u
    rows = np.arange(iR, g.n_u + 1)
    x = g.x_points(rows, j)
    r = M + x
    UD = g.ud_half(2 * rows, x)
    phi_c, PH_c = fld.col(j)
    if l == 1:
        _, PH_c = _Tcol(fld, j)
    PH_c = PH_c[iR:]
    with np.errstate(divide="ignore", invalid="ignore"):
        xw = np.where(x > 0, x ** (2.0 - p), 0.0 if p < 2 else (1.0 if p == 2 else 0.0))
        if variant == "base":
            dens = xw * UD / (4.0 * r**4) * _sector_sq(PH_c, mask)
        else:
            dPH = np.gradient(PH_c, h, axis=0) if len(rows) > 2 else np.zeros_like(PH_c)
            dens = xw / (r**2 * UD) * _sector_sq(dPH, mask)
    near = float(np.trapezoid(dens, dx=h))

    # outgoing piece u = u_R, columns j..n_v
    cols = np.arange(j, g.n_v + 1)
    xo = g.x_points(iR, cols)
    ro = M + xo
    Do = (xo / ro) ** 2
    phi_r, _ = fld.row(iR)
    f = _Trow(fld, iR) if l == 1 else phi_r
    f = f[j:]
    Lf = np.gradient(f, h, axis=0)
    lfac = (g.angular.ells * (g.angular.ells + 1)).astype(float)
    tflux = _sector_sq(Lf, mask) + (Do / 4.0) * _sector_sq(f, mask, lfac) / ro**2
    if variant == "base":
        fard = ro**p * _sector_sq(Lf, mask)
    else:
        PhiI = (2.0 * ro**2 / Do)[:, None] * Lf
        fard = ro**p * _sector_sq(np.gradient(PhiI, h, axis=0), mask)
    in_mid = ro < r1
    mid = float(np.trapezoid(np.where(in_mid, tflux, 0.0), dx=h))
    far = float(np.trapezoid(np.where(in_mid, 0.0, fard), dx=h))
    return FluxPieces(float(tau), float(p), int(l), sector, variant, near, mid, far,
                      float(ro[0]), out)


# -- Morawetz bulk ------------------------------------------------------------

def _bulk_columns(fld: Field, delta: float, r0: float):
    delta = float(delta)
    if delta in fld.bulk and abs(fld.plan.region_r0 - r0) < 1e-12:
        return fld.bulk[delta]
    if fld.phi is None:
        raise FluxRangeError(f"bulk for delta={delta} was not accumulated during the run")
    g = fld.grid
    plan = RecordPlan(tail_rows=0, region_r0=r0, bulk_deltas=(delta,))
    scratch = Field(g, fld.cfg, fld.data, plan)
    rec = _Recorder(g, plan, scratch)
    jv = np.arange(g.n_v + 1)
    for i in range(g.n_u + 1):
        rec.add(i, fld.phi[i], fld.PhiH[i], g.x_points(i, jv))
    return scratch.bulk[delta]


def morawetz_bulk(fld: Field, tau1: float, tau2: float, delta: float = 0.1,
                  sector: str = "all", r0: float = R_DEFAULT) -> float:
    """``int_A [(r-M)^(1+d) ((L phi)^2 + (Lbar phi)^2) + (r-M)^3 |grad_slash phi|^2]``.

    ``grad_slash = r^-1 grad_S2``.

    ``A = {r <= r0}`` between the slices at ``tau1 < tau2``; measure ``du dv domega``.
    """
    if not delta > 0:
        raise ConfigurationError("delta must be positive")
    if not tau1 < tau2:
        raise FluxRangeError("empty region: need tau1 < tau2")
    g = fld.grid
    j1 = int(round((tau1 - g.spec.v0) / g.h))
    j2 = int(round((tau2 - g.spec.v0) / g.h))
    if j1 < 0 or j2 > g.n_v or j1 >= j2:
        raise FluxRangeError(f"[{tau1}, {tau2}] outside the lattice")
    acc = _bulk_columns(fld, delta, r0)[sector if sector in SECTORS else "all"]
    return float(np.trapezoid(acc[j1:j2 + 1], dx=g.h))


def flux_table(fld: Field, taus, ps, ls=(0,), sectors=("0",), variants=("base",),
               R=R_DEFAULT, r1=R1_DEFAULT, bulk_delta=None):
    """Rows for ``flux_report.csv``; ``bulk`` covers the interval since the previous tau."""
    out = []
    taus = sorted(taus)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for k, tau in enumerate(taus):
            prev = taus[k - 1] if k else fld.grid.spec.v0
            for sector in sectors:
                try:
                    bulk = (morawetz_bulk(fld, prev, tau, bulk_delta, sector, R)
                            if bulk_delta else math.nan)
                except FluxRangeError:
                    bulk = math.nan
                for p in ps:
                    for l in ls:
                        for var in variants:
                            fp = weighted_flux(fld, tau, p, l, sector, var, R, r1)
                            out.append((tau, p, l, sector, var, fp.near, fp.mid, fp.far, bulk))
    return out


# -- master energy -------------------------------------------------------------

MASTER_TERMS = lambda d1, d2: (  # noqa: E731
    (3.0 - d1, "0", "base"),
    (1.0 - d1, "0", "commuted"),
    (3.0 + d2, ">=1", "base"),
    (1.0 + d2, ">=1", "commuted"),
)


def master_energy(fld: Field, tau: float, delta1: float = 0.1, delta2: float = 0.1,
                  R: float = R_DEFAULT, r1: float = R1_DEFAULT) -> float:
    """Sum of the implemented weighted fluxes for ``l = 0, 1``.

    Terms whose sector is absent from the angular grid contribute zero.
    """
    total = 0.0
    has_high = fld.grid.n_modes > 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for p, sector, var in MASTER_TERMS(delta1, delta2):
            if sector == ">=1" and not has_high:
                continue
            for l in (0, 1):
                total += weighted_flux(fld, tau, p, l, sector, var, R, r1).total
    return total


# -- Couch-Torrence -------------------------------------------------------------

@dataclass(frozen=True)
class CTResidual:
    q: float
    residual: float
    coverage: float


def _lagrange4(y, pos):
    """Cubic interpolation of ``y`` along its first axis (unit spacing) at ``pos``."""
    n = y.shape[0]
    k = np.clip(np.floor(pos).astype(int) - 1, 0, n - 4)
    t = pos - k
    shape = t.shape + (1,) * (y.ndim - 1)
    w0 = (-(t - 1) * (t - 2) * (t - 3) / 6.0).reshape(shape)
    w1 = (t * (t - 2) * (t - 3) / 2.0).reshape(shape)
    w2 = (-t * (t - 1) * (t - 3) / 2.0).reshape(shape)
    w3 = (t * (t - 1) * (t - 2) / 6.0).reshape(shape)
    return w0 * y[k] + w1 * y[k + 1] + w2 * y[k + 2] + w3 * y[k + 3]


def ct_duality_residual(fld: Field, q: float = 1.0, base: str = "r") -> CTResidual:
    """Linear wave residual of the Couch-Torrence image, relative to its own scale.

    The image of ``(u, v)`` is ``(v, u)``: retarded time takes the old advanced
    time and the radius goes to ``M + M**2/(r - M)``.  The candidate is
    ``(M/rho)**q psi(image)`` with ``rho = r`` (``base="r"``) or
    ``rho = r - M`` (``base="r-M"``).  Needs a full linear field on a uniform
    lattice; diamonds with a corner imaged off the lattice are skipped and the
    covered fraction is reported.
    """
    if base not in ("r", "r-M"):
        raise ConfigurationError(f"base must be 'r' or 'r-M', got {base!r}")
    if fld.phi is None:
        raise ConfigurationError("the duality study needs a fully recorded field")
    if not fld.cfg.linear:
        raise ConfigurationError("the duality study applies to linear runs")
    g = fld.grid
    if g.spec.compactify:
        raise ConfigurationError("the duality study uses the uniform lattice")
    M = g.bg.mass
    nu, nv = g.n_u, g.n_v
    I, J = np.meshgrid(np.arange(nu + 1), np.arange(nv + 1), indexing="ij")
    x = g.x_points(I, J)
    r = M + x
    rt = couch_torrence(r, g.bg)
    pu = (g.v - g.spec.u0) / g.h  # image retarded index, per column
    pv = (g.u - g.spec.v0) / g.h  # image advanced index, per row
    oku = (pu >= 0) & (pu <= nu)
    okv = (pv >= 0) & (pv <= nv)
    ok = okv[:, None] & oku[None, :]
    phit = np.zeros(fld.phi.shape)
    if ok.any():
        along_u = _lagrange4(fld.phi, pu[oku])  # (cols, n_v + 1, modes)
        img = _lagrange4(np.swapaxes(along_u, 0, 1), pv[okv])  # (rows, cols, modes)
        rho = r if base == "r" else x
        fac = r * (M / rho) ** q / rt
        phit[np.ix_(okv, oku)] = fac[np.ix_(okv, oku)][..., None] * img
    cover = ok[:-1, :-1] & ok[1:, :-1] & ok[:-1, 1:] & ok[1:, 1:]
    if not cover.any():
        warnings.warn("Couch-Torrence images fall off the lattice everywhere", stacklevel=2)
        return CTResidual(q, math.nan, 0.0)
    coverage = float(cover.mean())
    if coverage < 1.0:
        warnings.warn(f"restricted domain: coverage fraction {coverage:.3f}", stacklevel=2)
    S, E, W, N = phit[:-1, :-1], phit[:-1, 1:], phit[1:, :-1], phit[1:, 1:]
    xc = g.x_half(2 * I[:-1, :-1] + 1, 2 * J[:-1, :-1] + 1)
    rc = M + xc
    Dc = (xc / rc) ** 2
    Dpc = 2.0 * M * xc / rc**3
    lap = -(g.angular.ells * (g.angular.ells + 1)).astype(float)
    avg = 0.25 * (S + E + W + N)
    F = 0.25 * Dc[..., None] * (lap / rc[..., None] ** 2 - (Dpc / rc)[..., None]) * avg
    res = (N + S - W - E) - g.h**2 * F
    scale = np.abs(N + S - W - E) + g.h**2 * np.abs(F)
    num = math.sqrt(float(np.mean(res[cover] ** 2)))
    den = math.sqrt(float(np.mean(scale[cover] ** 2)))
    return CTResidual(q, num / den if den > 0 else 0.0, coverage)
