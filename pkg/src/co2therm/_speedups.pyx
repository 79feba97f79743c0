# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: coupled RK4 network integration and the
triangular rank-one proposal-factor update.

Semantics match ``co2therm._kernels_py`` exactly; the NumPy versions there
are the fallback when this module is unavailable.
"""

from libc.math cimport sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef void _rates(double[::1] c, double[::1] T,
                 int[::1] fsrc, int[::1] fdst, double[::1] q,
                 int[::1] ta, int[::1] tb, double[::1] cond,
                 double[::1] occ, double src_co2, double src_heat,
                 double rho_cp,
                 double[::1] inv_vol, double[::1] inv_cap,
                 double[::1] rc, double[::1] rt,
                 double[::1] conv_t) noexcept nogil:
    cdef Py_ssize_t i, e
    cdef Py_ssize_t n_z = c.shape[0]
    cdef Py_ssize_t n_fe = fsrc.shape[0]
    cdef Py_ssize_t n_te = ta.shape[0]
    cdef double qe, fc, ft, g
    cdef int a, b

    for i in range(n_z):
        rc[i] = 0.0
        rt[i] = 0.0
        conv_t[i] = 0.0

    # Upwind advection: flux along the edge orientation carries the
    # upstream value (Macaulay-bracket form collapses to a sign test).
    for e in range(n_fe):
        qe = q[e]
        a = fsrc[e]
        b = fdst[e]
        if qe >= 0.0:
            fc = qe * c[a]
            ft = qe * T[a]
        else:
            fc = qe * c[b]
            ft = qe * T[b]
        rc[a] -= fc
        rc[b] += fc
        conv_t[a] -= ft
        conv_t[b] += ft

    for e in range(n_te):
        a = ta[e]
        b = tb[e]
        g = cond[e] * (T[a] - T[b])
        rt[a] -= g
        rt[b] += g

    # Boundary zones carry inv_vol = inv_cap = 0, so their rates vanish
    # and RK4 stages leave the prescribed values untouched.
    for i in range(n_z):
        rc[i] = (rc[i] + occ[i] * src_co2) * inv_vol[i]
        rt[i] = (rt[i] + rho_cp * conv_t[i] + occ[i] * src_heat) * inv_cap[i]


def simulate_coupled(double[::1] c_init, double[::1] t_init,
                     int[::1] fsrc, int[::1] fdst, double[::1] q,
                     int[::1] ta, int[::1] tb, double[::1] cond,
                     double[::1] inv_vol, double[::1] inv_cap,
                     cnp.uint8_t[::1] is_boundary,
                     double[:, ::1] occupancy,
                     double[::1] amb_co2, double[::1] amb_temp,
                     long[::1] n_sub, double dt,
                     double src_co2, double src_heat, double rho_cp,
                     double[:, ::1] out_co2, double[:, ::1] out_temp):
    """Fixed-step RK4 integration of the coupled CO2/thermal network.

    ``occupancy``, ``amb_co2`` and ``amb_temp`` are sampled per substep and
    held constant across the four stages of that substep.  Output rows are
    written at the ends of the ``n_sub``-partitioned intervals; row 0 is the
    initial state.
    """
    cdef Py_ssize_t n_z = c_init.shape[0]
    cdef Py_ssize_t n_out = out_co2.shape[0]
    cdef Py_ssize_t k, s, i, g

    buf = np.empty((12, n_z))
    cdef double[:, ::1] w = buf
    cdef double[::1] c = w[0]
    cdef double[::1] T = w[1]
    cdef double[::1] cs = w[2]
    cdef double[::1] Ts = w[3]
    cdef double[::1] k1c = w[4]
    cdef double[::1] k1t = w[5]
    cdef double[::1] k2c = w[6]
    cdef double[::1] k2t = w[7]
    cdef double[::1] k3c = w[8]
    cdef double[::1] k3t = w[9]
    cdef double[::1] k4c = w[10]
    cdef double[::1] k4t = w[11]
    conv = np.empty(n_z)
    cdef double[::1] conv_t = conv

    with nogil:
        for i in range(n_z):
            c[i] = c_init[i]
            T[i] = t_init[i]
        for i in range(n_z):
            out_co2[0, i] = c[i]
            out_temp[0, i] = T[i]

        g = 0
        for k in range(n_out - 1):
            for s in range(n_sub[k]):
                for i in range(n_z):
                    if is_boundary[i]:
                        c[i] = amb_co2[g]
                        T[i] = amb_temp[g]

                _rates(c, T, fsrc, fdst, q, ta, tb, cond, occupancy[g],
                       src_co2, src_heat, rho_cp, inv_vol, inv_cap,
                       k1c, k1t, conv_t)
                for i in range(n_z):
                    cs[i] = c[i] + 0.5 * dt * k1c[i]
                    Ts[i] = T[i] + 0.5 * dt * k1t[i]
                _rates(cs, Ts, fsrc, fdst, q, ta, tb, cond, occupancy[g],
                       src_co2, src_heat, rho_cp, inv_vol, inv_cap,
                       k2c, k2t, conv_t)
                for i in range(n_z):
                    cs[i] = c[i] + 0.5 * dt * k2c[i]
                    Ts[i] = T[i] + 0.5 * dt * k2t[i]
                _rates(cs, Ts, fsrc, fdst, q, ta, tb, cond, occupancy[g],
                       src_co2, src_heat, rho_cp, inv_vol, inv_cap,
                       k3c, k3t, conv_t)
                for i in range(n_z):
                    cs[i] = c[i] + dt * k3c[i]
                    Ts[i] = T[i] + dt * k3t[i]
                _rates(cs, Ts, fsrc, fdst, q, ta, tb, cond, occupancy[g],
                       src_co2, src_heat, rho_cp, inv_vol, inv_cap,
                       k4c, k4t, conv_t)
                for i in range(n_z):
                    c[i] = c[i] + dt / 6.0 * (k1c[i] + 2.0 * k2c[i]
                                              + 2.0 * k3c[i] + k4c[i])
                    T[i] = T[i] + dt / 6.0 * (k1t[i] + 2.0 * k2t[i]
                                              + 2.0 * k3t[i] + k4t[i])
                g += 1
            for i in range(n_z):
                out_co2[k + 1, i] = c[i]
                out_temp[k + 1, i] = T[i]
    return None


def chol_rank1_update(double[:, ::1] L, double[::1] u, double coeff):
    """In-place lower-Cholesky update: L L^T + coeff * u u^T.

    Returns 0 on success.  Returns 1 (with L partially modified) when a
    downdate would destroy positive-definiteness; callers must operate on a
    copy and discard it on failure.
    """
    cdef Py_ssize_t n = L.shape[0]
    cdef Py_ssize_t i, k
    cdef double sign = 1.0 if coeff >= 0.0 else -1.0
    cdef double scale = sqrt(coeff if coeff >= 0.0 else -coeff)
    cdef double lkk, t, r, cq, s

    wbuf = np.empty(n)
    cdef double[::1] w = wbuf
    cdef int status = 0
    for i in range(n):
        w[i] = scale * u[i]

    with nogil:
        for k in range(n):
            lkk = L[k, k]
            t = lkk * lkk + sign * w[k] * w[k]
            if t <= 0.0 or lkk <= 0.0:
                status = 1
                break
            r = sqrt(t)
            cq = r / lkk
            s = w[k] / lkk
            L[k, k] = r
            for i in range(k + 1, n):
                L[i, k] = (L[i, k] + sign * s * w[i]) / cq
                w[i] = cq * w[i] - s * L[i, k]
    return status
