# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: Becker-Doring stepping and the explicit tridiagonal scheme."""

import numpy as np


def bd_run(const double[::1] conc, double monomer, double rate, long n_steps, long store_every):
    """Forward-Euler depolymerization; ``conc`` holds C_{i0}..C_{n_poly}.

    Returns ``(snapshots, monomer_history)`` with one row per stored step,
    the initial state included.
    """
    cdef Py_ssize_t n = conc.shape[0]
    cdef long n_store = n_steps // store_every + 1
    snaps_arr = np.empty((n_store, n), dtype=np.float64)
    mono_arr = np.empty(n_store, dtype=np.float64)
    cdef double[:, ::1] snaps = snaps_arr
    cdef double[::1] mono = mono_arr
    cdef double[::1] c = np.array(conc, dtype=np.float64, copy=True)
    cdef double outflow, nxt
    cdef long step, row = 0
    cdef Py_ssize_t i

    snaps[0, :] = c
    mono[0] = monomer
    for step in range(1, n_steps + 1):
        outflow = 0.0
        for i in range(1, n):
            outflow += c[i]
        # increasing index: c[i+1] is still the old value when c[i] is updated
        c[0] = c[0] + rate * c[1] if n > 1 else c[0]
        for i in range(1, n - 1):
            nxt = c[i + 1]
            c[i] = c[i] + rate * (nxt - c[i])
        if n > 1:
            c[n - 1] = c[n - 1] - rate * c[n - 1]
        monomer = monomer + rate * outflow
        if step % store_every == 0:
            row += 1
            snaps[row, :] = c
            mono[row] = monomer
    return snaps_arr, mono_arr


def stencil_run(const double[::1] u0, double sub, double diag, double sup,
                double diag0, double sup0, long n_steps, long store_every):
    """Apply the explicit scheme ``n_steps`` times.

    Row 0 uses ``(diag0, sup0)``, interior rows ``(sub, diag, sup)`` and the
    last node is held at zero.
    """
    cdef Py_ssize_t n = u0.shape[0]
    cdef long n_store = n_steps // store_every + 1
    out_arr = np.empty((n_store, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] u = np.array(u0, dtype=np.float64, copy=True)
    cdef double[::1] w = np.empty(n, dtype=np.float64)
    cdef long step, row = 0
    cdef Py_ssize_t i

    out[0, :] = u
    for step in range(1, n_steps + 1):
        w[0] = diag0 * u[0] + sup0 * u[1]
        for i in range(1, n - 1):
            w[i] = sub * u[i - 1] + diag * u[i] + sup * u[i + 1]
        w[n - 1] = 0.0
        u, w = w, u
        if step % store_every == 0:
            row += 1
            out[row, :] = u
    return out_arr
