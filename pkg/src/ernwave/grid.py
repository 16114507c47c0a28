"""Double-null lattice and its background tables.

The lattice is uniform with spacing ``h`` in a row coordinate ``xi`` and in
``v``.  By default ``xi = u``.  With ``compactify=True`` the rows beyond a
matching point ``u_s`` are relabelled so that ``u -> +inf`` (the horizon) is
reached at the last row ``xi_H = u0 + n_u h``::

    xi(u) = u                                  for u <= u_s
    xi(u) = xi_H - K * rho(u)                  for u >= u_s

where ``rho(u)`` is ``r - M`` on the initial ingoing ray ``v = v0``.  ``K`` and
``u_s`` make the map C^1.  Because ``rho`` is a regular radial coordinate at
the horizon, fields stay smooth in ``(xi, v)`` up to and including ``r = M``.

Points are addressed in half-step units: ``xi = u0 + a h/2``, ``v = v0 + b h/2``.
Lattice points have even ``(a, b)``, cell centres odd ``(a, b)``; the
``v``-edge midpoints of row ``i`` sit at ``(2i, 2j+1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    BackgroundERN,
    DomainError,
    rminus_from_rstar,
    rminus_from_rstar_array,
    tortoise_x,
)
from .modes import AngularGrid, ConfigurationError

__all__ = ["D_SWITCH", "GridSpec", "EvolutionGrid", "RowGeometry", "build_evolution_grid"]

D_SWITCH = 1e-2


@dataclass(frozen=True)
class GridSpec:
    u0: float = 0.0
    v0: float = 0.0
    n_u: int = 400
    n_v: int = 400
    h: float = 0.5
    compactify: bool = False

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ConfigurationError(f"grid spacing h must be positive, got {self.h!r}")
        if int(self.n_u) != self.n_u or int(self.n_v) != self.n_v:
            raise ConfigurationError("n_u and n_v must be integers")
        if self.n_u < 2 or self.n_v < 2:
            raise ConfigurationError(f"need n_u, n_v >= 2, got ({self.n_u}, {self.n_v})")

    @property
    def xi_span(self) -> float:
        return self.n_u * self.h

    @property
    def v_span(self) -> float:
        return self.n_v * self.h

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.u0, self.v0, self.n_u * factor, self.n_v * factor,
                        self.h / factor, self.compactify)


@dataclass(frozen=True)
class RowGeometry:
    """Background values needed to advance from row ``i`` to ``i + 1``.

    ``c_*`` arrays are at the ``n_v`` cell centres, ``e_*`` at the ``n_v``
    v-edge midpoints of the new row, ``p_*`` at the ``n_v + 1`` new-row points.
    ``c_UD`` is ``(du/dxi) * D`` which stays finite on compactified rows.
    """

    c_r: np.ndarray
    c_x: np.ndarray
    c_D: np.ndarray
    c_Dp: np.ndarray
    c_UD: np.ndarray
    c_v: np.ndarray
    e_r: np.ndarray
    e_x: np.ndarray
    e_D: np.ndarray
    e_Dp: np.ndarray
    e_a: np.ndarray
    e_v: np.ndarray
    p_r: np.ndarray
    p_x: np.ndarray


def _stretched_x(rho, delta, M):
    """Solve ``r*(M + x) - r*(M + rho) = delta/2`` for ``x >= rho`` (vectorised)."""
    rho, delta = np.broadcast_arrays(np.asarray(rho, float), np.asarray(delta, float))
    rho = rho.astype(float).copy()
    delta = delta.astype(float).copy()
    out = np.zeros(rho.shape)
    live = (rho > 0) & (delta != 0)
    out[(rho > 0) & (delta == 0)] = rho[(rho > 0) & (delta == 0)]
    if not live.any():
        return out
    p = rho[live]
    d = 0.5 * delta[live]
    if np.any(d < 0):
        raise DomainError("compactified rows are only defined for v >= v0")
    lo = np.log(p)
    hi = np.log(p + d)
    inv = M * M / p - d
    seed = np.where(inv > M * M, M * M / np.where(inv > 0, inv, 1.0), p + 0.5 * d)
    s = np.clip(np.log(seed), lo, hi)
    # roundoff in g scales with its largest term, M^2/rho near the horizon
    tol = 1e-14 * (1.0 + d + M * M / p)
    for _ in range(200):
        x = np.exp(s)
        g = (x - p) * (1.0 + M * M / (x * p)) + 2.0 * M * np.log(x / p) - d
        ok = np.abs(g) <= tol
        if ok.all():
            break
        hi = np.where(g > 0, s, hi)
        lo = np.where(g <= 0, s, lo)
        s_new = s - g * x / (M + x) ** 2
        bad = ~((lo < s_new) & (s_new < hi))
        s_new = np.where(bad, 0.5 * (lo + hi), s_new)
        stalled = np.abs(s_new - s) <= 1e-15
        s = np.where(ok, s, s_new)
        if np.all(ok | stalled):
            break
    out[live] = np.exp(s)
    return out


class EvolutionGrid:
    """Lattice plus background tables for one background and angular grid."""

    def __init__(self, spec: GridSpec, angular: AngularGrid, bg: BackgroundERN,
                 d_switch: float = D_SWITCH):
        self.spec = spec
        self.angular = angular
        self.bg = bg
        self.d_switch = float(d_switch)
        M = bg.mass
        h = spec.h
        self.xi = spec.u0 + h * np.arange(spec.n_u + 1)
        self.v = spec.v0 + h * np.arange(spec.n_v + 1)
        if spec.compactify:
            self._setup_compactification()
            a_max_uniform = int(math.floor(2 * (self.u_s - spec.u0) / h)) + 1
        else:
            self.u_s = math.inf
            self.K = math.nan
            a_max_uniform = 2 * spec.n_u
        # half-step diagonal table: index k = b - a + 2 n_u, r* = (v0-u0)/2 + (b-a) h/4
        a_top = min(a_max_uniform, 2 * spec.n_u)
        self._k_off = a_top
        ks = np.arange(-a_top, 2 * spec.n_v + 1)
        rstar = 0.5 * (spec.v0 - spec.u0) + 0.25 * h * ks
        self._diag_x = rminus_from_rstar_array(rstar, bg)
        if np.any(self._diag_x <= 0):
            raise DomainError("lattice reaches r <= M at finite coordinates")
        self._a_top = a_top

    # -- compactification -------------------------------------------------
    def _setup_compactification(self):
        spec, M = self.spec, self.bg.mass
        xi_H = spec.u0 + spec.xi_span

        def rho_of(u):
            return rminus_from_rstar(0.5 * (spec.v0 - u), self.bg)

        def mismatch(us):
            rho = rho_of(us)
            return us + 2.0 * (M + rho) ** 2 / rho - xi_H

        lo, hi = spec.u0, xi_H
        if mismatch(lo) >= 0:
            raise ConfigurationError(
                f"xi span {spec.xi_span} too short to compactify the horizon; "
                f"need more than {xi_H - mismatch(lo) - spec.u0:.3f}"
            )
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mismatch(mid) < 0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-12 * max(1.0, abs(hi)):
                break
        self.u_s = 0.5 * (lo + hi)
        self.rho_s = rho_of(self.u_s)
        self.K = 2.0 * (M + self.rho_s) ** 2 / self.rho_s ** 2
        self.xi_H = xi_H

    def _rho(self, xi):
        return np.maximum((self.xi_H - np.asarray(xi, float)) / self.K, 0.0)

    # -- coordinates ------------------------------------------------------
    @property
    def n_u(self):
        return self.spec.n_u

    @property
    def n_v(self):
        return self.spec.n_v

    @property
    def h(self):
        return self.spec.h

    @property
    def n_modes(self):
        return self.angular.n_modes

    def u_of_xi(self, xi):
        """Retarded coordinate of a row coordinate; ``inf`` on the horizon row."""
        xi = np.asarray(xi, dtype=float)
        if not self.spec.compactify:
            return xi.copy() if xi.ndim else float(xi)
        M = self.bg.mass
        rho = self._rho(xi)
        with np.errstate(divide="ignore"):
            ut = self.spec.v0 - 2.0 * np.where(rho > 0, tortoise_x(np.where(rho > 0, rho, 1.0), M), -np.inf)
        out = np.where(xi <= self.u_s, xi, ut)
        return out if out.ndim else float(out)

    @property
    def u(self):
        return self.u_of_xi(self.xi)

    def inv_uprime(self, xi):
        """``dxi/du`` (zero on the horizon row)."""
        xi = np.asarray(xi, dtype=float)
        if not self.spec.compactify:
            return np.ones_like(xi)
        M = self.bg.mass
        rho = self._rho(xi)
        return np.where(xi <= self.u_s, 1.0, self.K * rho**2 / (2.0 * (M + rho) ** 2))

    def x_half(self, a, b):
        """``r - M`` at half-step indices ``(a, b)`` (broadcasting)."""
        a, b = np.broadcast_arrays(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
        out = np.empty(a.shape)
        h = self.spec.h
        xi = self.spec.u0 + 0.5 * h * a
        uni = (a <= self._a_top) & (xi <= self.u_s)
        if uni.any():
            out[uni] = self._diag_x[b[uni] - a[uni] + self._k_off]
        if (~uni).any():
            rho = self._rho(xi[~uni])
            out[~uni] = _stretched_x(rho, 0.5 * h * b[~uni], self.bg.mass)
        return out

    def ud_half(self, a, x):
        """``(du/dxi) D`` at row half-index ``a`` for radii ``r = M + x``."""
        M = self.bg.mass
        a = np.asarray(a)
        x = np.asarray(x, dtype=float)
        r = M + x
        D = (x / r) ** 2
        if not self.spec.compactify:
            return np.broadcast_to(D, np.broadcast(a, x).shape).copy()
        xi = self.spec.u0 + 0.5 * self.spec.h * a
        rho = self._rho(xi)
        safe = np.where(rho > 0, rho, 1.0)
        ratio = np.where(rho > 0, x / safe, 1.0)
        stretched = (2.0 / self.K) * ((M + rho) ** 2 / M**2) * (M * ratio / r) ** 2
        return np.where(xi <= self.u_s, D, stretched)

    def row_geometry(self, i: int) -> RowGeometry:
        M = self.bg.mass
        nv = self.spec.n_v
        bc = 2 * np.arange(nv) + 1
        bp = 2 * np.arange(nv + 1)
        ac, ae = 2 * i + 1, 2 * i + 2
        c_x = self.x_half(ac, bc)
        e_x = self.x_half(ae, bc)
        p_x = self.x_half(ae, bp)
        c_r, e_r, p_r = M + c_x, M + e_x, M + p_x
        c_D, e_D = (c_x / c_r) ** 2, (e_x / e_r) ** 2
        c_Dp = 2.0 * M * c_x / c_r**3
        e_Dp = 2.0 * M * e_x / e_r**3
        e_a = (e_D - e_r * e_Dp) / (2.0 * e_r)
        c_UD = self.ud_half(ac, c_x)
        vmid = self.spec.v0 + 0.5 * self.spec.h * bc
        return RowGeometry(c_r, c_x, c_D, c_Dp, c_UD, vmid, e_r, e_x, e_D, e_Dp, e_a, vmid,
                           p_r, p_x)

    def edge_geometry_row0(self):
        """Edge midpoints along the initial outgoing ray ``xi = u0``."""
        M = self.bg.mass
        bc = 2 * np.arange(self.spec.n_v) + 1
        x = self.x_half(0, bc)
        r = M + x
        D = (x / r) ** 2
        Dp = 2.0 * M * x / r**3
        return r, x, D, Dp, (D - r * Dp) / (2.0 * r)

    def x_points(self, i, j):
        return self.x_half(2 * np.asarray(i), 2 * np.asarray(j))

    def r_points(self, i, j):
        return self.bg.mass + self.x_points(i, j)

    def tables(self):
        """Full 2-D background tables at lattice points (small grids only)."""
        M = self.bg.mass
        I, J = np.meshgrid(np.arange(self.n_u + 1), np.arange(self.n_v + 1), indexing="ij")
        x = self.x_points(I, J)
        r = M + x
        D = (x / r) ** 2
        Dp = 2.0 * M * x / r**3
        with np.errstate(divide="ignore"):
            rstar = np.where(x > 0, tortoise_x(np.where(x > 0, x, 1.0), M), -np.inf)
        return {"r": r, "r_minus_M": x, "D": D, "Dprime": Dp, "rstar": rstar,
                "potential": D * Dp / r}


def build_evolution_grid(spec: GridSpec, angular: AngularGrid, bg: BackgroundERN,
                         d_switch: float = D_SWITCH) -> EvolutionGrid:
    return EvolutionGrid(spec, angular, bg, d_switch)
