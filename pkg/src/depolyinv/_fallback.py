"""Pure NumPy versions of the compiled kernels (same signatures and results)."""

import numpy as np


def bd_run(conc, monomer, rate, n_steps, store_every):
    c = np.array(conc, dtype=np.float64, copy=True)
    n = c.shape[0]
    n_store = n_steps // store_every + 1
    snaps = np.empty((n_store, n))
    mono = np.empty(n_store)
    snaps[0] = c
    mono[0] = monomer
    row = 0
    shifted = np.zeros(n)
    for step in range(1, n_steps + 1):
        outflow = c[1:].sum()
        shifted[:-1] = c[1:]
        c_first = c[0] + rate * c[1] if n > 1 else c[0]
        c += rate * (shifted - c)
        c[0] = c_first
        monomer = monomer + rate * outflow
        if step % store_every == 0:
            row += 1
            snaps[row] = c
            mono[row] = monomer
    return snaps, mono


def stencil_run(u0, sub, diag, sup, diag0, sup0, n_steps, store_every):
    u = np.array(u0, dtype=np.float64, copy=True)
    n = u.shape[0]
    n_store = n_steps // store_every + 1
    out = np.empty((n_store, n))
    out[0] = u
    row = 0
    w = np.empty(n)
    for step in range(1, n_steps + 1):
        w[0] = diag0 * u[0] + sup0 * u[1]
        w[1:-1] = sub * u[:-2] + diag * u[1:-1] + sup * u[2:]
        w[-1] = 0.0
        u, w = w, u
        if step % store_every == 0:
            row += 1
            out[row] = u
    return out
