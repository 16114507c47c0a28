"""Compactly supported characteristic initial data."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import EvolutionGrid
from .modes import ConfigurationError

__all__ = ["InitialData", "bump", "bump_derivatives", "initial_data_bump", "mode_coefficients"]


@dataclass(frozen=True)
class InitialData:
    """``phi = epsilon * bump(r) * sum_l modes[l] * P_l(cos theta)`` on both initial rays.

    ``modes`` multiplies the unnormalised Legendre polynomials, so the default
    ``(1.0,)`` is pure spherically symmetric data with spherical mean
    ``epsilon * bump(r)``.
    """

    epsilon: float = 0.05
    r_center: float = 1.5
    half_width: float = 1.0
    modes: tuple = (1.0,)

    def __post_init__(self):
        if not math.isfinite(self.epsilon):
            raise ConfigurationError("epsilon must be finite")
        if not self.half_width > 0:
            raise ConfigurationError(f"bump half-width must be positive, got {self.half_width}")
        if len(self.modes) == 0:
            raise ConfigurationError("mode content must list at least the l=0 weight")
        object.__setattr__(self, "modes", tuple(float(m) for m in self.modes))

    def scaled(self, factor: float) -> "InitialData":
        return InitialData(self.epsilon * factor, self.r_center, self.half_width, self.modes)

    @property
    def support(self) -> tuple[float, float]:
        return self.r_center - self.half_width, self.r_center + self.half_width


def bump_derivatives(r, r_center: float, half_width: float):
    """``(b, db/dr, d2b/dr2)`` for ``b = exp(-1/(1 - s**2))``, ``s = (r - r_c)/w``."""
    s = (np.asarray(r, dtype=float) - r_center) / half_width
    inside = np.abs(s) < 1.0
    q = np.where(inside, 1.0 - s * s, 1.0)
    b = np.where(inside, np.exp(-1.0 / q), 0.0)
    g1 = -2.0 * s / q**2
    g2 = -2.0 / q**2 - 8.0 * s * s / q**3
    db = b * g1 / half_width
    d2b = b * (g1 * g1 + g2) / half_width**2
    return b, np.where(inside, db, 0.0), np.where(inside, d2b, 0.0)


def bump(r, r_center: float = 1.5, half_width: float = 1.0):
    return bump_derivatives(r, r_center, half_width)[0]


def mode_coefficients(data: InitialData, n_modes: int) -> np.ndarray:
    """Orthonormal-basis coefficient per unit ``epsilon * bump``."""
    if len(data.modes) > n_modes and any(m != 0 for m in data.modes[n_modes:]):
        raise ConfigurationError(
            f"data excite l={len(data.modes) - 1} but the angular grid stops at l={n_modes - 1}"
        )
    w = np.zeros(n_modes)
    for ell, m in enumerate(data.modes[:n_modes]):
        w[ell] = m * math.sqrt(2.0 / (2 * ell + 1))
    return w


def initial_data_bump(data: InitialData, grid: EvolutionGrid):
    """Data on the rays ``v = v0`` (column 0) and ``xi = u0`` (row 0).

    Returns ``(col_phi, col_PhiH, row_phi)`` with shapes ``(n_u+1, n_modes)``,
    ``(n_u+1, n_modes)`` and ``(n_v+1, n_modes)``.  ``col_PhiH`` is the exact
    ``(2r/D) Lbar phi = -r dphi/dr`` along the ingoing ray.
    """
    M = grid.bg.mass
    r_col = M + grid.x_points(np.arange(grid.n_u + 1), 0)
    r_row = M + grid.x_points(0, np.arange(grid.n_v + 1))
    lo, hi = data.support
    r_top = float(r_row.max())
    if data.epsilon != 0 and hi > r_top:
        raise ConfigurationError(
            f"data support [{lo:g}, {hi:g}] exceeds the grid's radial range (max r = {r_top:.6g})"
        )
    w = mode_coefficients(data, grid.n_modes) * data.epsilon
    b_c, db_c, _ = bump_derivatives(r_col, data.r_center, data.half_width)
    b_r, _, _ = bump_derivatives(r_row, data.r_center, data.half_width)
    col_phi = np.outer(b_c, w)
    col_PhiH = np.outer(-r_col * db_c, w)
    row_phi = np.outer(b_r, w)
    row_phi[0] = col_phi[0]
    return col_phi, col_PhiH, row_phi
