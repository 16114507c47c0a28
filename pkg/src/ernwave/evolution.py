"""Characteristic diamond evolution of ``phi = r psi``.

The lattice is filled row by row in ``xi`` (outgoing rays).  Each diamond
with corners S=(i,j), E=(i,j+1), W=(i+1,j), N=(i+1,j+1) is closed by::

    phi_N = phi_W + phi_E - phi_S + h^2 (du/dxi) L Lbar phi |_centre

with two fixed-point corrector passes for the centre-state nonlinearity.
The regular transversal derivative ``PhiH = (2r/D) Lbar phi`` is carried
along every outgoing row by integrating its transport equation in ``v``; it
replaces differenced values wherever ``D < D_switch``.

Large runs do not keep the whole lattice.  A :class:`RecordPlan` lists the
rows and columns to keep and the running bulk quantities to accumulate.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernel_py
from .backend import get_kernel
from .data import InitialData, bump_derivatives, initial_data_bump, mode_coefficients
from .grid import EvolutionGrid, GridSpec
from .modes import AngularGrid, ConfigurationError, synthesize

__all__ = [
    "OFF",
    "EvolutionError",
    "Field",
    "NonlinearityConfig",
    "RecordPlan",
    "StabilityError",
    "evolve",
    "evolve_linear",
    "evolve_manufactured",
    "ManufacturedSolution",
    "reduced_rhs_batch",
    "rhs_center",
    "snapshot_rows",
    "write_snapshot",
]

SNAPSHOT_HEADER = "u,v,r,ell,phi,Lphi,Lbarphi,PhiH"
_A_CODES = {"off": _kernel_py.A_OFF, "constant": _kernel_py.A_CONST,
            "sample_smooth": _kernel_py.A_SMOOTH}
A_BOUND = 10.0


class EvolutionError(ArithmeticError):
    """Non-finite values or a failed update during the march."""

    def __init__(self, message, u=None, v=None):
        self.u = u
        self.v = v
        super().__init__(message)


class StabilityError(EvolutionError):
    """The diamond corrector failed to contract."""


@dataclass(frozen=True)
class NonlinearityConfig:
    """Coefficient ``A`` of the null-form nonlinearity ``A g(dpsi, dpsi)``.

    ``sample_smooth`` is ``1 + tanh(psi)/4 + cos(theta) sin(v/20)/4``, a fixed
    bounded function with bounded derivatives.
    """

    a_mode: str = "constant"
    a_const: float = 1.0
    higher_order: str = "none"

    def __post_init__(self):
        if self.a_mode not in _A_CODES:
            raise ConfigurationError(
                f"a_mode must be one of {sorted(_A_CODES)}, got {self.a_mode!r}")
        if not (math.isfinite(self.a_const) and abs(self.a_const) <= A_BOUND):
            raise ConfigurationError(f"constant A must satisfy |c| <= {A_BOUND}")
        if self.higher_order != "none":
            raise ConfigurationError("higher-order terms are not implemented; use 'none'")

    @property
    def code(self) -> int:
        return _A_CODES[self.a_mode]

    @property
    def linear(self) -> bool:
        return self.a_mode == "off" or (self.a_mode == "constant" and self.a_const == 0.0)

    @property
    def spherically_symmetric(self) -> bool:
        return self.a_mode != "sample_smooth"


OFF = NonlinearityConfig("off")


def _tables(angular: AngularGrid, cfg: NonlinearityConfig):
    code = _kernel_py.A_OFF if cfg.linear else cfg.code
    lap = -(angular.ells * (angular.ells + 1)).astype(float)
    return _kernel_py.KernelTables(lap, angular.basis, angular.dtheta, angular.projector,
                                   angular.nodes, code, cfg.a_const)


def reduced_rhs_batch(phi, Lphi, PhiH, r, D, Dp, v, angular: AngularGrid,
                      cfg: NonlinearityConfig):
    """Vectorised ``Q`` (so that ``L Lbar phi = D Q / 4``) over leading axes.

    ``phi``, ``Lphi``, ``PhiH`` have shape ``(..., n_modes)``; the scalars
    broadcast over the leading axes.
    """
    phi = np.asarray(phi, float)
    r = np.asarray(r, float)[..., None]
    D = np.asarray(D, float)[..., None]
    Dp = np.asarray(Dp, float)[..., None]
    ell = angular.ells
    q = (-(ell * (ell + 1)) / r**2 - Dp / r) * phi
    if cfg.linear:
        return q
    pn = synthesize(phi, angular)
    ln = synthesize(Lphi, angular)
    hn = synthesize(PhiH, angular)
    gn = phi @ angular.dtheta
    if cfg.a_mode == "constant":
        A = cfg.a_const
    else:
        vv = np.asarray(v, float)[..., None]
        A = 1.0 + 0.25 * np.tanh(pn / r) + 0.25 * angular.nodes * np.sin(0.05 * vv)
    nl = A * ((2.0 / r**2) * ln * hn - (D / r**3) * pn * hn + (2.0 / r**2) * pn * ln
              - (D / r**3) * pn * pn + gn * gn / r**3)
    return q + nl @ angular.projector.T


def rhs_center(phi, Lphi, PhiH, r, cfg: NonlinearityConfig, angular: AngularGrid, bg,
               v: float = 0.0):
    """``L Lbar phi`` at one point, in mode space.

    The transversal derivative enters only through the regular combination
    ``PhiH = (2r/D) Lbar phi``, and ``|grad_S phi|^2`` is formed spectrally
    from ``phi``.
    """
    M = bg.mass
    if r < M:
        raise ConfigurationError("r must be >= M")
    D = (1.0 - M / r) ** 2
    Dp = 2.0 * M * (r - M) / r**3
    return 0.25 * D * reduced_rhs_batch(phi, Lphi, PhiH, r, D, Dp, v, angular, cfg)


@dataclass
class RecordPlan:
    """What to keep from a march.

    ``full`` stores every row.  ``rows``/``cols`` are kept in full along the
    other direction; the last ``tail_rows`` rows are always kept.  Bulk
    integrands over ``{r <= region_r0}`` are accumulated per column for each
    exponent in ``bulk_deltas``, and the running maximum over the same region
    of ``D**((1-delta)/2) |PhiH2|`` for each ``weighted_deltas`` entry.
    """

    full: bool = False
    rows: tuple = ()
    cols: tuple = ()
    tail_rows: int = 5
    snapshot_stride: int = 0
    region_r0: float = 1.8
    bulk_deltas: tuple = ()
    weighted_deltas: tuple = ()


SECTORS = ("0", ">=1", "all")


@dataclass
class Field:
    """Outcome of a march: stored rows/columns plus accumulated bulk data.

    Arrays hold orthonormal Legendre coefficients; use :meth:`nodal` for
    values at the angular nodes.
    """

    grid: EvolutionGrid
    cfg: NonlinearityConfig
    data: InitialData | None
    plan: RecordPlan
    phi: np.ndarray | None = None
    PhiH: np.ndarray | None = None
    rows: dict = field(default_factory=dict)
    cols: dict = field(default_factory=dict)
    bulk: dict = field(default_factory=dict)
    weighted_max: dict = field(default_factory=dict)
    corrector: tuple = (0.0, 0.0)
    wall_time: float = 0.0
    backend: str = ""

    def row(self, i: int):
        i = int(i) % (self.grid.n_u + 1)
        if self.phi is not None:
            return self.phi[i], self.PhiH[i]
        if i not in self.rows:
            raise KeyError(f"row {i} was not recorded")
        return self.rows[i]

    def col(self, j: int):
        j = int(j) % (self.grid.n_v + 1)
        if self.phi is not None:
            return self.phi[:, j], self.PhiH[:, j]
        if j not in self.cols:
            raise KeyError(f"column {j} was not recorded")
        return self.cols[j]

    def has_row(self, i):
        return self.phi is not None or (int(i) % (self.grid.n_u + 1)) in self.rows

    def nodal(self, coeffs):
        return synthesize(coeffs, self.grid.angular)

    @property
    def recorded_rows(self):
        if self.phi is not None:
            return list(range(self.grid.n_u + 1))
        return sorted(self.rows)


class _Recorder:
    def __init__(self, grid: EvolutionGrid, plan: RecordPlan, fld: Field):
        self.g = grid
        self.plan = plan
        self.f = fld
        nu, nv, nm = grid.n_u, grid.n_v, grid.n_modes
        if plan.full:
            fld.phi = np.zeros((nu + 1, nv + 1, nm))
            fld.PhiH = np.zeros((nu + 1, nv + 1, nm))
        keep = {i % (nu + 1) for i in plan.rows}
        keep |= set(range(max(0, nu + 1 - plan.tail_rows), nu + 1))
        if plan.snapshot_stride > 0:
            keep |= set(range(0, nu + 1, plan.snapshot_stride))
        self.keep_rows = keep
        self.cols = sorted({j % (nv + 1) for j in plan.cols})
        for j in self.cols:
            fld.cols[j] = (np.zeros((nu + 1, nm)), np.zeros((nu + 1, nm)))
        ell = grid.angular.ells
        self.sector_masks = {s: np.isin(ell, grid.angular.sector_modes(s)) for s in SECTORS}
        self.lfac = (ell * (ell + 1)).astype(float)
        for d in plan.bulk_deltas:
            fld.bulk[float(d)] = {s: np.zeros(nv + 1) for s in SECTORS}
        for d in plan.weighted_deltas:
            fld.weighted_max[float(d)] = np.zeros(nv + 1)
        self.window = []

    def add(self, i, phi, PhiH, x):
        g, f, plan = self.g, self.f, self.plan
        if plan.full:
            f.phi[i] = phi
            f.PhiH[i] = PhiH
        if i in self.keep_rows:
            f.rows[i] = (phi.copy(), PhiH.copy())
        for j in self.cols:
            f.cols[j][0][i] = phi[j]
            f.cols[j][1][i] = PhiH[j]
        if not (plan.bulk_deltas or plan.weighted_deltas):
            return
        M = g.bg.mass
        r = M + x
        region = r <= plan.region_r0
        if plan.bulk_deltas and region.any():
            self._bulk(i, phi, PhiH, x, r, region)
        if plan.weighted_deltas:
            self.window.append((i, PhiH.copy(), x, region))
            if len(self.window) > 3:
                self.window.pop(0)
            if len(self.window) == 3:
                self._weighted_centered()
            if i == g.n_u:
                self._weighted_last()

    def _bulk(self, i, phi, PhiH, x, r, region):
        # (r-M)^(1+d) [(L phi)^2 + (Lbar phi)^2] + (r-M)^3 |grad_slash phi|^2 in du dv domega,
        # written with UD = (du/dxi) D so the row sum runs over the xi lattice
        g = self.g
        h = g.h
        wrow = 0.5 * h if i in (0, g.n_u) else h
        UD = g.ud_half(2 * i, x)
        Lphi = np.gradient(phi, h, axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            for d, acc in self.f.bulk.items():
                xw = np.where(x > 0, x ** (d - 1.0), 0.0)
                w_L = UD * r**2 * xw
                w_Lb = UD * x ** (d + 3.0) / (4.0 * r**4)
                w_a = UD * r**2 * x
                for s, mask in self.sector_masks.items():
                    if not mask.any():
                        continue
                    sL = 2 * np.pi * np.sum(Lphi[:, mask] ** 2, axis=1)
                    sLb = 2 * np.pi * np.sum(PhiH[:, mask] ** 2, axis=1)
                    sA = 2 * np.pi * np.sum(self.lfac[mask] * phi[:, mask] ** 2, axis=1) / r**2
                    dens = w_L * sL + w_Lb * sLb + w_a * sA
                    acc[s] += wrow * np.where(region, dens, 0.0)

    def _phih2_weighted(self, i, PhiH2, x, region):
        g = self.g
        M = g.bg.mass
        r = M + x
        D = (x / r) ** 2
        mag = np.max(np.abs(synthesize(PhiH2, g.angular)), axis=1)
        for d, acc in self.f.weighted_max.items():
            val = np.where(region, D ** (0.5 * (1.0 - d)) * mag, 0.0)
            np.maximum(acc, val, out=acc)

    def _weighted_centered(self):
        g = self.g
        (_, Pm, _, _), (i, P0, x, region), (_, Pp, _, _) = self.window
        if not region.any():
            return
        UD = g.ud_half(2 * i, x)[:, None]
        r = (g.bg.mass + x)[:, None]
        PhiH2 = 2.0 * r * (Pp - Pm) / (2.0 * g.h) / UD
        self._phih2_weighted(i, PhiH2, x, region)

    def _weighted_last(self):
        g = self.g
        (_, P2, _, _), (_, P1, _, _), (i, P0, x, region) = self.window
        if not region.any():
            return
        UD = g.ud_half(2 * i, x)[:, None]
        r = (g.bg.mass + x)[:, None]
        PhiH2 = 2.0 * r * (3.0 * P0 - 4.0 * P1 + P2) / (2.0 * g.h) / UD
        self._phih2_weighted(i, PhiH2, x, region)


def _march(grid: EvolutionGrid, col_phi, col_PhiH, row_phi, cfg: NonlinearityConfig,
           plan: RecordPlan, data=None, source=None, backend=None) -> Field:
    kern = get_kernel(backend)
    tab = _tables(grid.angular, cfg)
    nv, nm = grid.n_v, grid.n_modes
    h = grid.h
    fld = Field(grid, cfg, data, plan,
                backend="compiled" if kern is not _kernel_py else "python")
    rec = _Recorder(grid, plan, fld)
    t0 = time.perf_counter()

    prev_phi = np.ascontiguousarray(row_phi, dtype=float).copy()
    prev_PhiH = np.zeros((nv + 1, nm))
    prev_PhiH[0] = col_PhiH[0]
    e_r, e_x, e_D, e_Dp, e_a = grid.edge_geometry_row0()
    e_v = grid.v[:-1] + 0.5 * h
    src0 = None if source is None else source.edges(0, e_r, e_D, e_Dp, e_v)
    status, j = kern.transport_row(prev_phi, prev_PhiH, h, e_r, e_D, e_Dp, e_a, e_v, tab,
                                   src0)
    if status:
        raise EvolutionError(f"non-finite PhiH on the initial outgoing ray at v={grid.v[j]:.6g}",
                             grid.u[0], grid.v[j])
    rec.add(0, prev_phi, prev_PhiH, grid.x_points(0, np.arange(nv + 1)))

    new_phi = np.zeros_like(prev_phi)
    new_PhiH = np.zeros_like(prev_PhiH)
    w1 = w2 = 0.0
    for i in range(grid.n_u):
        geo = grid.row_geometry(i)
        new_phi[0] = col_phi[i + 1]
        new_PhiH[0] = col_PhiH[i + 1]
        src_c = src_e = None
        if source is not None:
            src_c = source.centres(i, geo)
            src_e = source.edges(i + 1, geo.e_r, geo.e_D, geo.e_Dp, geo.e_v)
        status, j, d1, d2 = kern.step_row(prev_phi, prev_PhiH, new_phi, new_PhiH, h,
                                          grid.d_switch, geo.c_r, geo.c_D, geo.c_Dp, geo.c_UD,
                                          geo.c_v, geo.e_r, geo.e_D, geo.e_Dp, geo.e_a,
                                          geo.e_v, tab, src_c, src_e)
        w1, w2 = max(w1, d1), max(w2, d2)
        if status:
            uu = float(grid.u_of_xi(grid.xi[i + 1]))
            vv = float(grid.v[j])
            where = f"(u={uu:.6g}, v={vv:.6g}, r-M={grid.x_points(i + 1, j):.3e})"
            if status == _kernel_py.STATUS_NONCONTRACT:
                raise StabilityError(
                    f"corrector did not contract at {where}: second update {d2:.3e} > "
                    f"{_kernel_py.CONTRACTION_LIMIT} x first update {d1:.3e}; "
                    "reduce h or epsilon", uu, vv)
            raise EvolutionError(f"non-finite value at {where}", uu, vv)
        rec.add(i + 1, new_phi, new_PhiH, geo.p_x)
        prev_phi, new_phi = new_phi, prev_phi
        prev_PhiH, new_PhiH = new_PhiH, prev_PhiH
    fld.corrector = (w1, w2)
    fld.wall_time = time.perf_counter() - t0
    return fld


def _default_plan(grid: EvolutionGrid, plan):
    if plan is not None:
        return plan
    cells = (grid.n_u + 1) * (grid.n_v + 1) * grid.n_modes
    return RecordPlan(full=cells <= 4_000_000)


def evolve(grid: EvolutionGrid, data: InitialData, cfg: NonlinearityConfig,
           plan: RecordPlan | None = None, backend: str | None = None) -> Field:
    """March the nonlinear system over the whole lattice."""
    col_phi, col_PhiH, row_phi = initial_data_bump(data, grid)
    return _march(grid, col_phi, col_PhiH, row_phi, cfg, _default_plan(grid, plan), data,
                  backend=backend)


def evolve_linear(grid: EvolutionGrid, data: InitialData, plan: RecordPlan | None = None,
                  backend: str | None = None) -> Field:
    """The ``A = 0`` flow; a single explicit pass per diamond, exactly linear."""
    return evolve(grid, data, OFF, plan, backend)


# -- manufactured solutions --------------------------------------------------

@dataclass(frozen=True)
class ManufacturedSolution:
    """``phi = eps sin(k u) sin(k v) bump(r)`` times fixed mode weights."""

    epsilon: float = 0.05
    k: float = 0.1
    r_center: float = 3.0
    half_width: float = 1.0
    modes: tuple = (1.0,)

    def weights(self, n_modes):
        return self.epsilon * mode_coefficients(
            InitialData(1.0, self.r_center, self.half_width, self.modes), n_modes)

    def parts(self, u, v, r, bg):
        """``(phi, Lphi, PhiH, d_u d_v phi)`` per unit mode weight."""
        M = bg.mass
        k = self.k
        b, db, d2b = bump_derivatives(r, self.r_center, self.half_width)
        x = r - M
        D = (x / r) ** 2
        Dp = 2.0 * M * x / r**3
        f, fp = np.sin(k * u), k * np.cos(k * u)
        g, gp = np.sin(k * v), k * np.cos(k * v)
        phi = f * g * b
        Lphi = f * (gp * b + g * db * D / 2.0)
        PhiH = g * (2.0 * r * fp * b / np.where(D > 0, D, 1.0) - r * f * db)
        PhiH = np.where(b != 0, PhiH, 0.0)
        duv = (fp * gp * b + fp * g * db * D / 2.0 - f * gp * db * D / 2.0
               - f * g * (D / 4.0) * (d2b * D + db * Dp))
        return phi, Lphi, PhiH, duv

    def field(self, u, v, r, bg, n_modes):
        w = self.weights(n_modes)
        phi, Lphi, PhiH, duv = self.parts(u, v, r, bg)
        return (phi[..., None] * w, Lphi[..., None] * w, PhiH[..., None] * w,
                duv[..., None] * w)


class _ManufacturedSource:
    def __init__(self, sol, grid, cfg):
        self.sol, self.g, self.cfg = sol, grid, cfg
        if grid.spec.compactify:
            raise ConfigurationError("manufactured solutions use the uniform lattice")

    def _residual(self, u, v, r, D, Dp):
        phi, Lphi, PhiH, duv = self.sol.field(u, v, r, self.g.bg, self.g.n_modes)
        Q = reduced_rhs_batch(phi, Lphi, PhiH, r, D, Dp, v, self.g.angular, self.cfg)
        return duv - 0.25 * D[..., None] * Q

    def centres(self, i, geo):
        u = self.g.xi[i] + 0.5 * self.g.h
        return np.ascontiguousarray(self._residual(u, geo.c_v, geo.c_r, geo.c_D, geo.c_Dp))

    def edges(self, i, e_r, e_D, e_Dp, e_v):
        u = self.g.xi[i]
        res = self._residual(u, e_v, e_r, e_D, e_Dp)
        fac = np.where(e_D > 0, 2.0 * e_r / np.where(e_D > 0, e_D, 1.0), 0.0)
        return np.ascontiguousarray(fac[:, None] * res)


def evolve_manufactured(grid: EvolutionGrid, sol: ManufacturedSolution,
                        cfg: NonlinearityConfig, backend: str | None = None):
    """March with the forcing that makes ``sol`` exact; returns ``(field, max error)``."""
    M = grid.bg.mass
    nm = grid.n_modes
    iu = np.arange(grid.n_u + 1)
    jv = np.arange(grid.n_v + 1)
    r_col = M + grid.x_points(iu, 0)
    r_row = M + grid.x_points(0, jv)
    col_phi, _, col_PhiH, _ = sol.field(grid.xi, grid.v[0], r_col, grid.bg, nm)
    row_phi, _, _, _ = sol.field(grid.xi[0], grid.v, r_row, grid.bg, nm)
    fld = _march(grid, col_phi, col_PhiH, row_phi, cfg, RecordPlan(full=True),
                 source=_ManufacturedSource(sol, grid, cfg), backend=backend)
    U, V = np.meshgrid(grid.xi, grid.v, indexing="ij")
    R = M + grid.x_points(iu[:, None], jv[None, :])
    exact = sol.field(U, V, R, grid.bg, nm)[0]
    return fld, float(np.max(np.abs(fld.phi - exact)))


# -- snapshot export ---------------------------------------------------------

def snapshot_rows(fld: Field, stride: int = 1):
    """Yield ``(u, v, r, ell, phi, Lphi, Lbarphi, PhiH)`` tuples on a strided sublattice."""
    g = fld.grid
    M = g.bg.mass
    rows = fld.recorded_rows
    if fld.phi is None and fld.plan.snapshot_stride > 0:
        s = fld.plan.snapshot_stride
        rows = [i for i in rows if i % s == 0 or i == g.n_u]
        stride = s
    else:
        rows = [i for i in rows if i % stride == 0 or i == g.n_u]
    cols = np.arange(0, g.n_v + 1, stride)
    for i in rows:
        phi, PhiH = fld.row(i)
        x = g.x_points(i, cols)
        r = M + x
        D = (x / r) ** 2
        Lphi = np.gradient(phi, g.h, axis=0)[cols]
        u = float(g.u_of_xi(g.xi[i]))
        for k, j in enumerate(cols):
            for ell in range(g.n_modes):
                yield (u, float(g.v[j]), float(r[k]), ell, float(phi[j, ell]),
                       float(Lphi[k, ell]), float(D[k] * PhiH[j, ell] / (2.0 * r[k])),
                       float(PhiH[j, ell]))


def write_snapshot(fld: Field, path, stride: int = 1):
    with open(path, "w") as fh:
        fh.write(SNAPSHOT_HEADER + "\n")
        for rec in snapshot_rows(fld, stride):
            fh.write(",".join(repr(x) for x in rec) + "\n")
