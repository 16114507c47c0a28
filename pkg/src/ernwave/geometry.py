"""Extremal Reissner-Nordstrom background.

Geometric units throughout.  The exterior is ``r >= M``; the horizon sits at
``r = M`` where ``D = (1 - M/r)**2`` has a double root.

Coordinates
-----------
Ingoing Eddington-Finkelstein ``(v, r)`` with ``T = d/dv``, ``Y = d/dr`` and
double-null ``(u, v)`` with ``u = v - 2 r*``, ``L = d/dv``, ``Lbar = d/du``.
The two frames are related by::

    L    = T + (D/2) Y
    Lbar = -(D/2) Y

so ``T f = L f + Lbar f`` and ``Y f = -(2/D) Lbar f`` (``Y`` at fixed ``v``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BackgroundERN",
    "DomainError",
    "InversionError",
    "NullPoint",
    "couch_torrence",
    "ef_derivatives",
    "metric_D",
    "metric_Dprime",
    "radius_from_rstar",
    "rminus_from_rstar",
    "rminus_from_rstar_array",
    "tortoise",
    "tortoise_x",
]

_MAX_ITER = 200
_X_FLOOR = 1e-14


class DomainError(ValueError):
    """Raised for radii outside the modelled exterior."""


class InversionError(ArithmeticError):
    """Raised when the tortoise inversion fails to converge."""

    def __init__(self, target, bracket):
        self.target = target
        self.bracket = bracket
        super().__init__(
            f"tortoise inversion did not converge for r*={target!r}; "
            f"last bracket r in [{bracket[0]!r}, {bracket[1]!r}]"
        )


@dataclass(frozen=True)
class BackgroundERN:
    """Extremal RN background of mass ``mass`` (``|Q| = M``)."""

    mass: float = 1.0

    def __post_init__(self):
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise DomainError(f"mass must be positive and finite, got {self.mass!r}")

    @property
    def M(self) -> float:
        return self.mass


@dataclass(frozen=True)
class NullPoint:
    u: float
    v: float

    @property
    def rstar(self) -> float:
        return 0.5 * (self.v - self.u)

    def radius(self, bg: BackgroundERN, tol: float = 1e-13) -> float:
        return radius_from_rstar(self.rstar, bg, tol)


def _check_radius(r, M, strict):
    r = np.asarray(r, dtype=float)
    bad = (r <= M) if strict else (r < M)
    if np.any(bad) or np.any(~np.isfinite(r)):
        op = ">" if strict else ">="
        raise DomainError(f"radius must satisfy r {op} M={M}; interior is not modelled")
    return r


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def metric_D(r, bg: BackgroundERN):
    """``D(r) = (1 - M/r)**2``."""
    M = bg.mass
    r = _check_radius(r, M, strict=False)
    return _scalar_or_array((1.0 - M / r) ** 2)


def metric_Dprime(r, bg: BackgroundERN):
    """``dD/dr = 2M (r - M) / r**3``."""
    M = bg.mass
    r = _check_radius(r, M, strict=False)
    return _scalar_or_array(2.0 * M * (r - M) / r**3)


def tortoise_x(x, M: float):
    """Tortoise coordinate as a function of ``x = r - M > 0`` (no range checks)."""
    x = np.asarray(x, dtype=float)
    return _scalar_or_array(x - M * M / x + 2.0 * M * np.log(x / M))


def tortoise(r, bg: BackgroundERN):
    """``r* = r - M - M**2/(r - M) + 2M log((r - M)/M)``, so that ``dr*/dr = 1/D``."""
    M = bg.mass
    r = _check_radius(r, M, strict=True)
    return tortoise_x(r - M, M)


def _upper_x(target, M):
    # bracket from the root-finding design: r <= max(2M, M + 2M^2/|x| + |x| + 10M)
    a = abs(target)
    hi_r = max(2.0 * M, M + (2.0 * M * M / a if a > 0 else 0.0) + a + 10.0 * M)
    return hi_r - M


def _seed_x(target, M):
    if target < -M:
        return M * M / (-target)
    if target > 4.0 * M:
        return target
    return M


def rminus_from_rstar(target: float, bg: BackgroundERN, tol: float = 1e-13) -> float:
    """Solve ``r*(M + x) = target`` for ``x = r - M``.

    Safeguarded Newton in ``s = log x`` inside a bisection bracket, so the
    near-horizon branch (``x ~ M**2/|r*|``) keeps full relative precision.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    M = bg.mass
    target = float(target)
    if not math.isfinite(target):
        raise InversionError(target, (M, math.inf))
    lo = math.log(_X_FLOOR * M)
    hi = math.log(_upper_x(target, M))
    s = min(max(math.log(_seed_x(target, M)), lo), hi)
    scale = tol * max(1.0, abs(target))
    for _ in range(_MAX_ITER):
        x = math.exp(s)
        g = x - M * M / x + 2.0 * M * math.log(x / M) - target
        if abs(g) <= scale:
            return x
        if g > 0:
            hi = s
        else:
            lo = s
        dg = (M + x) ** 2 / x
        step = g / dg
        s_new = s - step
        if not (lo < s_new < hi):
            s_new = 0.5 * (lo + hi)
        if s_new == s:
            break
        s = s_new
    x = math.exp(s)
    g = x - M * M / x + 2.0 * M * math.log(x / M) - target
    if abs(g) <= scale:
        return x
    raise InversionError(target, (M + math.exp(lo), M + math.exp(hi)))


def radius_from_rstar(target: float, bg: BackgroundERN, tol: float = 1e-13) -> float:
    """Invert the tortoise map: the radius ``r > M`` with ``r*(r) = target``."""
    return bg.mass + rminus_from_rstar(target, bg, tol)


def rminus_from_rstar_array(targets, bg: BackgroundERN, tol: float = 1e-13) -> np.ndarray:
    """Vectorised :func:`rminus_from_rstar` for table construction."""
    M = bg.mass
    t = np.asarray(targets, dtype=float)
    shape = t.shape
    t = t.ravel()
    if not np.all(np.isfinite(t)):
        raise InversionError(float(t[~np.isfinite(t)][0]), (M, math.inf))
    a = np.abs(t)
    with np.errstate(divide="ignore"):
        hi_r = np.maximum(2.0 * M, M + np.where(a > 0, 2.0 * M * M / a, 0.0) + a + 10.0 * M)
    lo = np.full_like(t, math.log(_X_FLOOR * M))
    hi = np.log(hi_r - M)
    seed = np.where(t < -M, M * M / np.maximum(-t, M), np.where(t > 4.0 * M, t, M))
    s = np.clip(np.log(seed), lo, hi)
    scale = tol * np.maximum(1.0, a)
    done = np.zeros(t.shape, dtype=bool)
    for _ in range(_MAX_ITER):
        x = np.exp(s)
        g = x - M * M / x + 2.0 * M * np.log(x / M) - t
        done |= np.abs(g) <= scale
        if done.all():
            break
        hi = np.where(g > 0, s, hi)
        lo = np.where(g <= 0, s, lo)
        s_new = s - g * x / (M + x) ** 2
        out = ~((lo < s_new) & (s_new < hi))
        s_new = np.where(out, 0.5 * (lo + hi), s_new)
        s = np.where(done, s, s_new)
    else:
        k = int(np.flatnonzero(~done)[0])
        raise InversionError(float(t[k]), (M + math.exp(lo[k]), M + math.exp(hi[k])))
    return np.exp(s).reshape(shape)


def couch_torrence(r, bg: BackgroundERN):
    """Couch-Torrence inversion ``r -> M + M**2/(r - M)``; fixes ``r = 2M``."""
    M = bg.mass
    r = _check_radius(r, M, strict=True)
    return _scalar_or_array(M + M * M / (r - M))


def ef_derivatives(Lf, Lbarf, r, bg: BackgroundERN):
    """Convert null derivatives to ``(T f, Y f)``.

    ``Y f = -(2/D) Lbar f`` is singular on the horizon; callers near ``r = M``
    should work with the paired combination ``(2r/D) Lbar f`` instead.
    """
    D = metric_D(r, bg)
    return np.add(Lf, Lbarf), -2.0 * np.asarray(Lbarf) / D
