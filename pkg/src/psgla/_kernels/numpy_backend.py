"""Pure-numpy kernels, vectorized across chains with a python loop over steps.

The packed routines mirror the numba backend operation for operation
(sequential accumulation over coordinates, identical expression order) so the
two backends produce bit-identical trajectories from the same noise arrays.
"""
from __future__ import annotations

import numpy as np


def _grad_packed(X, lcode, lq, lc, lf, lp):
    chains, n = X.shape
    if lcode == 0:      # quadratic: grad = x
        return X.copy()
    if lcode == 1:      # double well: grad = 4 (||x||^2 - q) x
        r2 = X[:, 0] * X[:, 0]
        for j in range(1, n):
            r2 = r2 + X[:, j] * X[:, j]
        t = 4.0 * (r2 - lq[0])
        return t[:, None] * X
    if lcode == 2:      # trig sum: grad = -sum_t c_t sin(w_t.x + p_t) w_t
        G = np.zeros_like(X)
        for t in range(lc.shape[0]):
            ph = np.full(chains, lp[t])
            for j in range(n):
                ph = ph + lf[t, j] * X[:, j]
            s = lc[t] * np.sin(ph)
            for j in range(n):
                G[:, j] = G[:, j] - s * lf[t, j]
        return G
    if lcode == 3:      # linear: constant slope stored in lc
        return np.broadcast_to(lc, X.shape).copy()
    raise ValueError(f"unknown loss code {lcode}")


def _project_packed(Y, bcode, bp1, bp2):
    if bcode == 1:      # box
        return np.minimum(np.maximum(Y, bp1), bp2)
    # ball
    n = Y.shape[1]
    D = Y - bp1
    r2 = D[:, 0] * D[:, 0]
    for j in range(1, n):
        r2 = r2 + D[:, j] * D[:, j]
    nrm = np.sqrt(r2)
    out = nrm > bp2[0]
    if not np.any(out):
        return Y
    scale = bp2[0] / nrm[out]
    Y = Y.copy()
    Y[out] = bp1 + D[out] * scale[:, None]
    return Y


def advance_packed(X, bcode, bp1, bp2, lcode, lq, lc, lf, lp, gshift, Z, W,
                   eta_dt, coef, m, s0):
    X = np.array(X, dtype=np.float64)
    steps = W.shape[1]
    use_z = Z.shape[1] > 0
    use_shift = np.any(gshift != 0.0)
    Y = X
    for s in range(steps):
        G = _grad_packed(X, lcode, lq, lc, lf, lp)
        if use_shift:
            G = G + gshift
        if use_z:
            G = G + Z[:, (s0 + s) // m, :]
        Y = (X - eta_dt * G) + coef * W[:, s, :]
        X = _project_packed(Y, bcode, bp1, bp2)
    R = X - Y if steps > 0 else np.zeros_like(X)
    return X, R


def advance_objects(X, body, loss, gshift, Z, W, eta_dt, coef, m, s0):
    """Fallback for bodies/losses without a packed kernel (e.g. polytopes)."""
    X = np.array(X, dtype=np.float64)
    steps = W.shape[1]
    use_z = Z.shape[1] > 0
    Y = X
    for s in range(steps):
        if use_z:
            G = loss.noisy_grad(X, Z[:, (s0 + s) // m, :])
        else:
            G = loss.mean_grad(X)
        Y = (X - eta_dt * G) + coef * W[:, s, :]
        X = body.project(Y)
    R = X - Y if steps > 0 else np.zeros_like(X)
    return X, R
