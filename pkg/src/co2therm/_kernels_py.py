"""Pure-NumPy fallback for the compiled kernels.

Call signatures and numerical semantics mirror ``co2therm._speedups``; the
compiled module is preferred at import time when present (see
``co2therm._backend``).
"""

from __future__ import annotations

import numpy as np


def _rates(c, T, fsrc, fdst, q, ta, tb, cond, occ, src_co2, src_heat,
           rho_cp, inv_vol, inv_cap, scatter_flow, scatter_th):
    upstream = np.where(q >= 0.0, c[fsrc], c[fdst])
    rc = scatter_flow @ (q * upstream)
    upstream_t = np.where(q >= 0.0, T[fsrc], T[fdst])
    conv_t = scatter_flow @ (q * upstream_t)
    g = cond * (T[ta] - T[tb])
    rt = scatter_th @ g
    rc = (rc + occ * src_co2) * inv_vol
    rt = (rt + rho_cp * conv_t + occ * src_heat) * inv_cap
    return rc, rt


def _scatter_matrices(n_z, fsrc, fdst, ta, tb):
    sf = np.zeros((n_z, len(fsrc)))
    for e, (a, b) in enumerate(zip(fsrc, fdst)):
        sf[a, e] -= 1.0
        sf[b, e] += 1.0
    st = np.zeros((n_z, len(ta)))
    for e, (a, b) in enumerate(zip(ta, tb)):
        st[a, e] -= 1.0
        st[b, e] += 1.0
    return sf, st


def simulate_coupled(c_init, t_init, fsrc, fdst, q, ta, tb, cond,
                     inv_vol, inv_cap, is_boundary, occupancy,
                     amb_co2, amb_temp, n_sub, dt,
                     src_co2, src_heat, rho_cp, out_co2, out_temp):
    """Fixed-step RK4 integration of the coupled CO2/thermal network."""
    c = np.array(c_init, dtype=float)
    T = np.array(t_init, dtype=float)
    boundary = np.asarray(is_boundary, dtype=bool)
    scatter_flow, scatter_th = _scatter_matrices(len(c), fsrc, fdst, ta, tb)

    out_co2[0] = c
    out_temp[0] = T
    g = 0
    for k in range(out_co2.shape[0] - 1):
        for _ in range(n_sub[k]):
            c[boundary] = amb_co2[g]
            T[boundary] = amb_temp[g]
            occ = occupancy[g]

            k1c, k1t = _rates(c, T, fsrc, fdst, q, ta, tb, cond, occ,
                              src_co2, src_heat, rho_cp, inv_vol, inv_cap,
                              scatter_flow, scatter_th)
            k2c, k2t = _rates(c + 0.5 * dt * k1c, T + 0.5 * dt * k1t,
                              fsrc, fdst, q, ta, tb, cond, occ,
                              src_co2, src_heat, rho_cp, inv_vol, inv_cap,
                              scatter_flow, scatter_th)
            k3c, k3t = _rates(c + 0.5 * dt * k2c, T + 0.5 * dt * k2t,
                              fsrc, fdst, q, ta, tb, cond, occ,
                              src_co2, src_heat, rho_cp, inv_vol, inv_cap,
                              scatter_flow, scatter_th)
            k4c, k4t = _rates(c + dt * k3c, T + dt * k3t,
                              fsrc, fdst, q, ta, tb, cond, occ,
                              src_co2, src_heat, rho_cp, inv_vol, inv_cap,
                              scatter_flow, scatter_th)
            c = c + dt / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c)
            T = T + dt / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
            g += 1
        out_co2[k + 1] = c
        out_temp[k + 1] = T
    return None


def chol_rank1_update(L, u, coeff):
    """Refactorize L L^T + coeff * u u^T; in-place on ``L``.

    The fallback assembles the updated product and runs a dense Cholesky,
    which yields the same (unique) lower factor as the triangular rank-one
    algorithm in the compiled module, up to rounding.
    """
    M = L @ L.T + coeff * np.outer(u, u)
    try:
        L[...] = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return 1
    return 0
