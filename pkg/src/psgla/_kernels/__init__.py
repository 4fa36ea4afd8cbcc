"""Hot inner loops for chain simulation, with numba and pure-numpy backends.

Backend selection: the ``PSGLA_BACKEND`` environment variable may be set to
``numba``, ``numpy`` or ``auto`` (default). In auto mode the numba kernels are
used whenever numba imports and the (body, loss) pair has a packed fast path;
everything else falls back to the numpy backend. Both backends consume the
same pre-generated noise arrays and perform arithmetic in the same order, so
results are identical bit for bit on the shared fast paths.

Run ``python -m psgla.benchmark`` to compare the two backends.
"""
from __future__ import annotations

import os

import numpy as np

from . import numpy_backend

_BACKEND = None  # resolved lazily: "numba" or "numpy"
_NUMBA_MOD = None


def _resolve():
    global _BACKEND, _NUMBA_MOD
    if _BACKEND is not None:
        return
    choice = os.environ.get("PSGLA_BACKEND", "auto").lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"PSGLA_BACKEND must be auto, numba or numpy, got {choice!r}")
    if choice == "numpy":
        _BACKEND = "numpy"
        return
    try:
        from . import numba_backend as nb
        _NUMBA_MOD = nb
        _BACKEND = "numba"
    except ImportError:
        if choice == "numba":
            raise
        _BACKEND = "numpy"


def backend_name():
    _resolve()
    return _BACKEND


def set_backend(name):
    """Force a backend (used by tests and the benchmark); 'auto' re-resolves."""
    global _BACKEND
    if name == "auto":
        _BACKEND = None
        _resolve()
        return
    if name == "numba":
        global _NUMBA_MOD
        from . import numba_backend as nb
        _NUMBA_MOD = nb
    elif name != "numpy":
        raise ValueError(name)
    _BACKEND = name


def packable(body, loss):
    """True when the (body, loss) pair has a packed kernel fast path."""
    from ..geometry import Ball, Box
    return isinstance(body, (Ball, Box)) and getattr(loss, "kernel_code", -1) >= 0


def pack_body(body):
    from ..geometry import Ball, Box
    if isinstance(body, Ball):
        return 0, np.ascontiguousarray(body.center), np.array([body.radius])
    if isinstance(body, Box):
        return 1, np.ascontiguousarray(body.lower), np.ascontiguousarray(body.upper)
    raise TypeError(f"no packed kernel for body {type(body).__name__}")


def pack_loss(loss):
    code = loss.kernel_code
    n = loss.dim
    empty1 = np.zeros(0)
    empty2 = np.zeros((0, n))
    if code == 0:   # quadratic
        return code, np.zeros(1), empty1, empty2, empty1
    if code == 1:   # double well
        return code, np.array([loss.q]), empty1, empty2, empty1
    if code == 2:   # trig sum
        return (code, np.zeros(1), np.ascontiguousarray(loss.coeffs),
                np.ascontiguousarray(loss.freqs), np.ascontiguousarray(loss.phases))
    if code == 3:   # linear
        return code, np.zeros(1), np.ascontiguousarray(loss.slope), empty2, empty1
    raise TypeError(f"no packed kernel for loss {type(loss).__name__}")


def advance_block(X, body, loss, gshift, Z, W, eta_dt, coef, m, s0):
    """Advance every chain through the substeps covered by ``W``.

    X       (chains, n) current states, modified copy returned
    gshift  (n,) constant added to the family gradient (data-driven mean)
    Z       (chains, units, n) per-unit additive gradient noise (0 units = none)
    W       (chains, steps, n) Brownian increments, pre-scaled by sqrt(dt)
    eta_dt  eta * dt
    coef    sqrt(2 eta / beta)
    m       substeps per unit time (z refresh stride)
    s0      substep offset of W[:, 0] within the Z block's first unit

    Returns (X_new, R) where R holds the reflection displacement of the final
    executed substep for each chain.
    """
    _resolve()
    if _BACKEND == "numba" and packable(body, loss):
        bcode, bp1, bp2 = pack_body(body)
        lcode, lq, lc, lf, lp = pack_loss(loss)
        X = np.ascontiguousarray(X)
        R = np.zeros_like(X)
        _NUMBA_MOD.advance(X, bcode, bp1, bp2, lcode, lq, lc, lf, lp,
                           np.ascontiguousarray(gshift),
                           np.ascontiguousarray(Z), np.ascontiguousarray(W),
                           float(eta_dt), float(coef), int(m), int(s0), R)
        return X, R
    if packable(body, loss):
        bcode, bp1, bp2 = pack_body(body)
        lcode, lq, lc, lf, lp = pack_loss(loss)
        return numpy_backend.advance_packed(X, bcode, bp1, bp2, lcode, lq, lc, lf, lp,
                                            gshift, Z, W, eta_dt, coef, m, s0)
    return numpy_backend.advance_objects(X, body, loss, gshift, Z, W,
                                         eta_dt, coef, m, s0)
