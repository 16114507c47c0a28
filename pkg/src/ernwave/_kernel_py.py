"""Pure-Python diamond kernel (fallback and reference for the compiled core).

Unknowns are mode coefficients ``phi[j, m]`` and the carried regular
transversal derivative ``PhiH[j, m] = (2r/D) Lbar phi``.  With
``F = L Lbar phi = D Q / 4`` the reduced right-hand side is::

    Q = lap(phi) - D' phi / r + A [ (2/r^2) Lphi PhiH - (D/r^3) phi PhiH
                                   + (2/r^2) phi Lphi - (D/r^3) phi^2
                                   + (1/r) |grad_S phi|^2 ]

which stays finite at ``D = 0``.  Products are formed at angular nodes and
projected back.
"""

from __future__ import annotations

import math

import numpy as np

A_OFF, A_CONST, A_SMOOTH = 0, 1, 2
STATUS_OK, STATUS_NONFINITE, STATUS_NONCONTRACT = 0, 1, 2
CONTRACTION_LIMIT = 0.5
_FLOOR = 1e-13


class KernelTables:
    """Angular tables and nonlinearity switches shared by every cell."""

    def __init__(self, lap, basis, dtheta, projector, nodes, a_mode, a_const):
        self.lap = np.ascontiguousarray(lap, dtype=float)
        self.basis = np.ascontiguousarray(basis, dtype=float)
        self.dtheta = np.ascontiguousarray(dtheta, dtype=float)
        self.projector = np.ascontiguousarray(projector, dtype=float)
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.a_mode = int(a_mode)
        self.a_const = float(a_const)


def linear_rhs(phi, r, Dp, tab):
    return (tab.lap / (r * r) - Dp / r) * phi


def reduced_rhs(phi, Lphi, PhiH, r, D, Dp, v, tab):
    """``Q`` in mode space for one point (arrays of length ``n_modes``)."""
    q = linear_rhs(phi, r, Dp, tab)
    if tab.a_mode == A_OFF:
        return q
    pn = phi @ tab.basis
    ln = Lphi @ tab.basis
    hn = PhiH @ tab.basis
    gn = phi @ tab.dtheta
    if tab.a_mode == A_CONST:
        A = tab.a_const
    else:
        A = 1.0 + 0.25 * np.tanh(pn / r) + 0.25 * tab.nodes * math.sin(0.05 * v)
    r2 = r * r
    r3 = r2 * r
    nl = A * ((2.0 / r2) * ln * hn - (D / r3) * pn * hn + (2.0 / r2) * pn * ln
              - (D / r3) * pn * pn + gn * gn / r3)
    return q + tab.projector @ nl


def transport_edge(phW, phN, PHW, h, r, D, Dp, a, v, tab, src_e=None):
    """Advance ``PhiH`` across one v-edge by the implicit midpoint rule."""
    phe = 0.5 * (phW + phN)
    Le = (phN - phW) / h
    lo = 1.0 - 0.5 * h * a
    hi = 1.0 + 0.5 * h * a
    extra = 0.0 if src_e is None else h * src_e
    Q = reduced_rhs(phe, Le, PHW, r, D, Dp, v, tab)
    PHN = (PHW * hi + h * 0.5 * r * Q + extra) / lo
    if tab.a_mode != A_OFF:
        Q = reduced_rhs(phe, Le, 0.5 * (PHW + PHN), r, D, Dp, v, tab)
        PHN = (PHW * hi + h * 0.5 * r * Q + extra) / lo
    return PHN


def transport_row(phi, PhiH, h, e_r, e_D, e_Dp, e_a, e_v, tab, src_e=None):
    """Fill ``PhiH[1:]`` along an outgoing row from ``PhiH[0]`` (in place)."""
    n = phi.shape[0] - 1
    for j in range(n):
        s = None if src_e is None else src_e[j]
        PhiH[j + 1] = transport_edge(phi[j], phi[j + 1], PhiH[j], h, e_r[j], e_D[j], e_Dp[j],
                                     e_a[j], e_v[j], tab, s)
        if not np.all(np.isfinite(PhiH[j + 1])):
            return STATUS_NONFINITE, j + 1
    return STATUS_OK, -1


def step_row(prev_phi, prev_PhiH, new_phi, new_PhiH, h, d_switch,
             c_r, c_D, c_Dp, c_UD, c_v, e_r, e_D, e_Dp, e_a, e_v, tab,
             src_c=None, src_e=None):
    """Advance one row of diamonds.  ``new_*[0]`` must hold boundary values.

    Returns ``(status, j, delta1, delta2)``; on failure ``j`` is the column of
    the offending north corner.
    """
    n = prev_phi.shape[0] - 1
    h2 = h * h
    nonlinear = tab.a_mode != A_OFF
    worst1 = worst2 = 0.0
    for j in range(n):
        S = prev_phi[j]
        E = prev_phi[j + 1]
        W = new_phi[j]
        r, D, Dp, UD, v = c_r[j], c_D[j], c_Dp[j], c_UD[j], c_v[j]
        base = W + E - S
        extra = 0.0 if src_c is None else h2 * src_c[j]
        phc = 0.5 * (W + E)
        N = base + h2 * 0.25 * UD * linear_rhs(phc, r, Dp, tab) + extra
        if nonlinear:
            carried = 0.5 * (new_PhiH[j] + prev_PhiH[j + 1])
            deltas = []
            for _ in range(2):
                Lc = (E - S + N - W) / (2.0 * h)
                if D >= d_switch:
                    PHc = 2.0 * r * (W - S + N - E) / (2.0 * h) / UD
                else:
                    PHc = carried
                Nn = base + h2 * 0.25 * UD * reduced_rhs(phc, Lc, PHc, r, D, Dp, v, tab) + extra
                deltas.append(float(np.max(np.abs(Nn - N))))
                N = Nn
            d1, d2 = deltas
            worst1 = max(worst1, d1)
            worst2 = max(worst2, d2)
            scale = _FLOOR * (float(np.max(np.abs(N))) + h2)
            if d2 > CONTRACTION_LIMIT * d1 and d2 > scale:
                return STATUS_NONCONTRACT, j + 1, d1, d2
        if not np.all(np.isfinite(N)):
            return STATUS_NONFINITE, j + 1, worst1, worst2
        new_phi[j + 1] = N
        s = None if src_e is None else src_e[j]
        new_PhiH[j + 1] = transport_edge(W, N, new_PhiH[j], h, e_r[j], e_D[j], e_Dp[j],
                                         e_a[j], e_v[j], tab, s)
        if not np.all(np.isfinite(new_PhiH[j + 1])):
            return STATUS_NONFINITE, j + 1, worst1, worst2
    return STATUS_OK, -1, worst1, worst2

