"""Axisymmetric angular layer: zonal Legendre modes on a Gauss-Legendre grid.

Mode coefficients use the orthonormal basis ``Phat_l = sqrt((2l+1)/2) P_l``
with ``int_{-1}^{1} Phat_l Phat_m dx = delta_lm``.  With ``x = cos(theta)``
the spherical mean of a field is ``a_0 / sqrt(2)`` and
``int_{S^2} f**2 domega = 2 pi sum_l a_l**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg

__all__ = [
    "AngularGrid",
    "ConfigurationError",
    "angular_gradient_sq",
    "build_angular_grid",
    "dealiased_nodes",
    "mode_laplacian_factor",
    "project",
    "synthesize",
]


class ConfigurationError(ValueError):
    """Invalid discretisation or run configuration."""


@dataclass(frozen=True, eq=False)
class AngularGrid:
    l_max: int
    n_nodes: int
    nodes: np.ndarray
    weights: np.ndarray
    # basis[l, j] = Phat_l(x_j); dtheta[l, j] = d/dtheta Phat_l at x_j
    basis: np.ndarray = field(repr=False)
    dtheta: np.ndarray = field(repr=False)

    @property
    def n_modes(self) -> int:
        return self.l_max + 1

    @property
    def ells(self) -> np.ndarray:
        return np.arange(self.n_modes)

    @property
    def projector(self) -> np.ndarray:
        """``(n_modes, n_nodes)`` matrix taking nodal values to coefficients."""
        return self.basis * self.weights

    def gram(self) -> np.ndarray:
        return self.projector @ self.basis.T

    def sector_modes(self, sector: str) -> np.ndarray:
        if sector in ("0", "l0", "ell0"):
            return np.array([0])
        if sector in (">=1", "ge1", "l>=1"):
            return np.arange(1, self.n_modes)
        if sector == "all":
            return np.arange(self.n_modes)
        raise ValueError(f"unknown sector {sector!r}; expected '0', '>=1' or 'all'")


def dealiased_nodes(l_max: int) -> int:
    """Smallest node count satisfying the two-thirds rule for quadratic products."""
    return max(l_max + 1, math.ceil(3 * (l_max + 1) / 2))


def _normalized_legendre(l_max, x):
    out = np.empty((l_max + 1, x.size))
    deriv = np.empty_like(out)
    for ell in range(l_max + 1):
        c = np.zeros(ell + 1)
        c[ell] = math.sqrt((2 * ell + 1) / 2.0)
        out[ell] = npleg.legval(x, c)
        deriv[ell] = npleg.legval(x, npleg.legder(c)) if ell > 0 else 0.0
    return out, deriv


def build_angular_grid(l_max: int, n_nodes: int | None = None) -> AngularGrid:
    if l_max < 0:
        raise ConfigurationError(f"l_max must be >= 0, got {l_max}")
    if n_nodes is None:
        n_nodes = dealiased_nodes(l_max)
    if n_nodes < l_max + 1:
        raise ConfigurationError(
            f"n_nodes={n_nodes} < l_max+1={l_max + 1}: the transform would alias"
        )
    x, w = npleg.leggauss(n_nodes)
    basis, dx = _normalized_legendre(l_max, x)
    sin_theta = np.sqrt(1.0 - x * x)
    for arr in (x, w, basis, dx):
        arr.setflags(write=False)
    dtheta = -sin_theta * dx
    dtheta.setflags(write=False)
    return AngularGrid(l_max, n_nodes, x, w, basis, dtheta)


def _check_len(values, n, what):
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != n:
        raise ValueError(f"{what}: trailing dimension {values.shape[-1]} != {n}")
    return values


def project(values, grid: AngularGrid) -> np.ndarray:
    """Nodal values ``(..., n_nodes)`` to coefficients ``(..., n_modes)``."""
    values = _check_len(values, grid.n_nodes, "project")
    return values @ grid.projector.T


def synthesize(coeffs, grid: AngularGrid) -> np.ndarray:
    """Coefficients ``(..., n_modes)`` to nodal values ``(..., n_nodes)``."""
    coeffs = _check_len(coeffs, grid.n_modes, "synthesize")
    return coeffs @ grid.basis


def mode_laplacian_factor(ell: int, r: float) -> float:
    """Eigenvalue of the spherical Laplacian on radius-``r`` spheres: ``-l(l+1)/r**2``."""
    if ell < 0:
        raise ValueError("ell must be >= 0")
    if not r > 0:
        raise ValueError("r must be positive")
    return -ell * (ell + 1) / (r * r)


def angular_gradient_sq(values, r, grid: AngularGrid) -> np.ndarray:
    """``(1/r**2) (d_theta f)**2`` at the nodes, derivative taken spectrally."""
    a = project(values, grid)
    dth = a @ grid.dtheta
    return dth * dth / np.asarray(r, dtype=float) ** 2
