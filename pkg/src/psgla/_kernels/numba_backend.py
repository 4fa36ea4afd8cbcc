"""Numba-compiled chain kernels.

Expression order matches numpy_backend exactly; see that module for the
bit-identity contract.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def advance(X, bcode, bp1, bp2, lcode, lq, lc, lf, lp, gshift, Z, W,
            eta_dt, coef, m, s0, R):
    chains, n = X.shape
    steps = W.shape[1]
    use_z = Z.shape[1] > 0
    use_shift = False
    for j in range(n):
        if gshift[j] != 0.0:
            use_shift = True
    g = np.empty(n)
    y = np.empty(n)
    for c in range(chains):
        for s in range(steps):
            # gradient of the loss family at X[c]
            if lcode == 0:
                for j in range(n):
                    g[j] = X[c, j]
            elif lcode == 1:
                r2 = X[c, 0] * X[c, 0]
                for j in range(1, n):
                    r2 = r2 + X[c, j] * X[c, j]
                t = 4.0 * (r2 - lq[0])
                for j in range(n):
                    g[j] = t * X[c, j]
            elif lcode == 2:
                for j in range(n):
                    g[j] = 0.0
                for k in range(lc.shape[0]):
                    ph = lp[k]
                    for j in range(n):
                        ph = ph + lf[k, j] * X[c, j]
                    sv = lc[k] * np.sin(ph)
                    for j in range(n):
                        g[j] = g[j] - sv * lf[k, j]
            else:
                for j in range(n):
                    g[j] = lc[j]
            if use_shift:
                for j in range(n):
                    g[j] = g[j] + gshift[j]
            if use_z:
                zi = (s0 + s) // m
                for j in range(n):
                    g[j] = g[j] + Z[c, zi, j]
            # Euler step followed by projection
            for j in range(n):
                y[j] = (X[c, j] - eta_dt * g[j]) + coef * W[c, s, j]
            if bcode == 1:
                for j in range(n):
                    v = y[j]
                    if v < bp1[j]:
                        v = bp1[j]
                    elif v > bp2[j]:
                        v = bp2[j]
                    X[c, j] = v
            else:
                r2 = (y[0] - bp1[0]) * (y[0] - bp1[0])
                for j in range(1, n):
                    r2 = r2 + (y[j] - bp1[j]) * (y[j] - bp1[j])
                nrm = np.sqrt(r2)
                if nrm > bp2[0]:
                    scale = bp2[0] / nrm
                    for j in range(n):
                        X[c, j] = bp1[j] + (y[j] - bp1[j]) * scale
                else:
                    for j in range(n):
                        X[c, j] = y[j]
            if s == steps - 1:
                for j in range(n):
                    R[c, j] = X[c, j] - y[j]
