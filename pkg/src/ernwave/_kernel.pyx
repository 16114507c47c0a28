# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled diamond kernel.  Mirrors ``_kernel_py`` cell for cell."""

import numpy as np
from libc.math cimport fabs, tanh, sin, isfinite

cdef enum:
    A_OFF = 0
    A_CONST = 1
    A_SMOOTH = 2

cdef double CONTRACTION_LIMIT = 0.5
cdef double FLOOR = 1e-13


cdef struct Tab:
    int nm
    int nn
    int amode
    double ac
    double* lap
    double* basis
    double* dth
    double* proj
    double* nodes
    double* pn
    double* ln
    double* hn
    double* gn
    double* nl


cdef inline void linear_rhs(const double* phi, double r, double Dp, Tab* t, double* out) noexcept nogil:
    cdef int m
    cdef double r2 = r * r
    for m in range(t.nm):
        out[m] = (t.lap[m] / r2 - Dp / r) * phi[m]


cdef void reduced_rhs(const double* phi, const double* L, const double* H, double r, double D,
                      double Dp, double v, Tab* t, double* out) noexcept nogil:
    cdef int m, k
    cdef int nm = t.nm, nn = t.nn
    cdef double a, b, c, g, A, sv, acc
    cdef double r2 = r * r
    cdef double r3 = r2 * r
    linear_rhs(phi, r, Dp, t, out)
    if t.amode == A_OFF:
        return
    for k in range(nn):
        a = 0.0; b = 0.0; c = 0.0; g = 0.0
        for m in range(nm):
            a = a + phi[m] * t.basis[m * nn + k]
            b = b + L[m] * t.basis[m * nn + k]
            c = c + H[m] * t.basis[m * nn + k]
            g = g + phi[m] * t.dth[m * nn + k]
        t.pn[k] = a; t.ln[k] = b; t.hn[k] = c; t.gn[k] = g
    if t.amode == A_SMOOTH:
        sv = sin(0.05 * v)
    for k in range(nn):
        if t.amode == A_CONST:
            A = t.ac
        else:
            A = 1.0 + 0.25 * tanh(t.pn[k] / r) + 0.25 * t.nodes[k] * sv
        a = t.pn[k]; b = t.ln[k]; c = t.hn[k]; g = t.gn[k]
        t.nl[k] = A * ((2.0 / r2) * b * c - (D / r3) * a * c + (2.0 / r2) * a * b
                       - (D / r3) * a * a + g * g / r3)
    for m in range(nm):
        acc = 0.0
        for k in range(nn):
            acc = acc + t.proj[m * nn + k] * t.nl[k]
        out[m] = out[m] + acc


cdef int transport_edge(const double* phW, const double* phN, const double* PHW, double* PHN,
                        double h, double r, double D, double Dp, double a, double v,
                        const double* src, Tab* t, double* phe, double* Le, double* He,
                        double* Q) noexcept nogil:
    cdef int m
    cdef double lo = 1.0 - 0.5 * h * a
    cdef double hi = 1.0 + 0.5 * h * a
    cdef double extra
    for m in range(t.nm):
        phe[m] = 0.5 * (phW[m] + phN[m])
        Le[m] = (phN[m] - phW[m]) / h
    reduced_rhs(phe, Le, PHW, r, D, Dp, v, t, Q)
    for m in range(t.nm):
        extra = 0.0 if src == NULL else h * src[m]
        PHN[m] = (PHW[m] * hi + h * 0.5 * r * Q[m] + extra) / lo
    if t.amode != A_OFF:
        for m in range(t.nm):
            He[m] = 0.5 * (PHW[m] + PHN[m])
        reduced_rhs(phe, Le, He, r, D, Dp, v, t, Q)
        for m in range(t.nm):
            extra = 0.0 if src == NULL else h * src[m]
            PHN[m] = (PHW[m] * hi + h * 0.5 * r * Q[m] + extra) / lo
    for m in range(t.nm):
        if not isfinite(PHN[m]):
            return 1
    return 0


cdef class _Buffers:
    cdef object arrays
    cdef Tab tab

    def __init__(self, tab):
        lap = np.array(tab.lap, dtype=np.float64, order="C")
        basis = np.array(tab.basis, dtype=np.float64, order="C")
        dth = np.array(tab.dtheta, dtype=np.float64, order="C")
        proj = np.array(tab.projector, dtype=np.float64, order="C")
        nodes = np.array(tab.nodes, dtype=np.float64, order="C")
        nm = basis.shape[0]
        nn = basis.shape[1]
        work = np.zeros(5 * nn + 8 * nm, dtype=np.float64)
        self.arrays = (lap, basis, dth, proj, nodes, work)
        cdef double[::1] vl = lap, vb = basis.ravel(), vd = dth.ravel(), vp = proj.ravel()
        cdef double[::1] vn = nodes, vw = work
        self.tab.nm = nm
        self.tab.nn = nn
        self.tab.amode = int(tab.a_mode)
        self.tab.ac = float(tab.a_const)
        self.tab.lap = &vl[0]
        self.tab.basis = &vb[0]
        self.tab.dth = &vd[0]
        self.tab.proj = &vp[0]
        self.tab.nodes = &vn[0]
        self.tab.pn = &vw[0]
        self.tab.ln = &vw[nn]
        self.tab.hn = &vw[2 * nn]
        self.tab.gn = &vw[3 * nn]
        self.tab.nl = &vw[4 * nn]

    cdef double* scratch(self, int k):
        cdef double[::1] vw = self.arrays[5]
        return &vw[5 * self.tab.nn + k * self.tab.nm]


def transport_row(double[:, ::1] phi, double[:, ::1] PhiH, double h,
                  double[::1] e_r, double[::1] e_D, double[::1] e_Dp, double[::1] e_a,
                  double[::1] e_v, tab, src_e=None):
    cdef _Buffers buf = _Buffers(tab)
    cdef Tab* t = &buf.tab
    cdef int n = phi.shape[0] - 1
    cdef int j
    cdef double[:, ::1] se
    cdef const double* sp
    cdef bint has_src = src_e is not None
    if has_src:
        se = np.ascontiguousarray(src_e, dtype=np.float64)
    cdef double* phe = buf.scratch(0)
    cdef double* Le = buf.scratch(1)
    cdef double* He = buf.scratch(2)
    cdef double* Q = buf.scratch(3)
    for j in range(n):
        sp = &se[j, 0] if has_src else NULL
        if transport_edge(&phi[j, 0], &phi[j + 1, 0], &PhiH[j, 0], &PhiH[j + 1, 0], h,
                          e_r[j], e_D[j], e_Dp[j], e_a[j], e_v[j], sp, t, phe, Le, He, Q):
            return 1, j + 1
    return 0, -1


def step_row(double[:, ::1] prev_phi, double[:, ::1] prev_PhiH,
             double[:, ::1] new_phi, double[:, ::1] new_PhiH, double h, double d_switch,
             double[::1] c_r, double[::1] c_D, double[::1] c_Dp, double[::1] c_UD,
             double[::1] c_v, double[::1] e_r, double[::1] e_D, double[::1] e_Dp,
             double[::1] e_a, double[::1] e_v, tab, src_c=None, src_e=None):
    cdef _Buffers buf = _Buffers(tab)
    cdef Tab* t = &buf.tab
    cdef int nm = t.nm
    cdef int n = prev_phi.shape[0] - 1
    cdef int j, m, p
    cdef double h2 = h * h
    cdef double r, D, Dp, UD, v, d, dmax, nmax, scale
    cdef double d1 = 0.0, d2 = 0.0, worst1 = 0.0, worst2 = 0.0
    cdef bint nonlinear = t.amode != A_OFF
    cdef bint has_sc = src_c is not None
    cdef bint has_se = src_e is not None
    cdef double[:, ::1] sc
    cdef double[:, ::1] se
    if has_sc:
        sc = np.ascontiguousarray(src_c, dtype=np.float64)
    if has_se:
        se = np.ascontiguousarray(src_e, dtype=np.float64)
    cdef double* base = buf.scratch(0)
    cdef double* phc = buf.scratch(1)
    cdef double* N = buf.scratch(2)
    cdef double* Lc = buf.scratch(3)
    cdef double* PHc = buf.scratch(4)
    cdef double* Q = buf.scratch(5)
    cdef double* ex = buf.scratch(6)
    cdef double* He = buf.scratch(7)
    cdef const double* S
    cdef const double* E
    cdef const double* W
    cdef const double* sp
    with nogil:
        for j in range(n):
            S = &prev_phi[j, 0]
            E = &prev_phi[j + 1, 0]
            W = &new_phi[j, 0]
            r = c_r[j]; D = c_D[j]; Dp = c_Dp[j]; UD = c_UD[j]; v = c_v[j]
            for m in range(nm):
                base[m] = W[m] + E[m] - S[m]
                phc[m] = 0.5 * (W[m] + E[m])
                ex[m] = h2 * sc[j, m] if has_sc else 0.0
            linear_rhs(phc, r, Dp, t, Q)
            for m in range(nm):
                N[m] = base[m] + h2 * 0.25 * UD * Q[m] + ex[m]
            if nonlinear:
                for p in range(2):
                    for m in range(nm):
                        Lc[m] = (E[m] - S[m] + N[m] - W[m]) / (2.0 * h)
                        if D >= d_switch:
                            PHc[m] = 2.0 * r * (W[m] - S[m] + N[m] - E[m]) / (2.0 * h) / UD
                        else:
                            PHc[m] = 0.5 * (new_PhiH[j, m] + prev_PhiH[j + 1, m])
                    reduced_rhs(phc, Lc, PHc, r, D, Dp, v, t, Q)
                    dmax = 0.0
                    for m in range(nm):
                        d = base[m] + h2 * 0.25 * UD * Q[m] + ex[m]
                        if fabs(d - N[m]) > dmax:
                            dmax = fabs(d - N[m])
                        N[m] = d
                    if p == 0:
                        d1 = dmax
                    else:
                        d2 = dmax
                if d1 > worst1:
                    worst1 = d1
                if d2 > worst2:
                    worst2 = d2
                nmax = 0.0
                for m in range(nm):
                    if fabs(N[m]) > nmax:
                        nmax = fabs(N[m])
                scale = FLOOR * (nmax + h2)
                if d2 > CONTRACTION_LIMIT * d1 and d2 > scale:
                    with gil:
                        return 2, j + 1, d1, d2
            for m in range(nm):
                if not isfinite(N[m]):
                    with gil:
                        return 1, j + 1, worst1, worst2
                new_phi[j + 1, m] = N[m]
            sp = &se[j, 0] if has_se else NULL
            if transport_edge(W, &new_phi[j + 1, 0], &new_PhiH[j, 0], &new_PhiH[j + 1, 0], h,
                              e_r[j], e_D[j], e_Dp[j], e_a[j], e_v[j], sp, t,
                              phc, Lc, He, Q):
                with gil:
                    return 1, j + 1, worst1, worst2
    return 0, -1, worst1, worst2
