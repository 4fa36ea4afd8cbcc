"""Compact convex bodies: projection, gauge, support, and uniform sampling.

Every body contains an origin-centered ball of radius ``inradius`` and has a
finite ``diameter``. All operations accept a single point ``(n,)`` or a batch
``(m, n)`` and are pure, so bodies are safe to share across workers.
"""
from __future__ import annotations

import numpy as np

from .errors import DegenerateGeometryError, InputError, InvariantViolation, NumericError

MEMBERSHIP_TOL = 1e-9

DYKSTRA_TOL = 1e-10
DYKSTRA_MAX_SWEEPS = 10_000


def _as_batch(x, dim):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != dim:
            raise InputError(f"point has dimension {x.shape[0]}, body has dimension {dim}")
        return x[None, :], True
    if x.ndim == 2:
        if x.shape[1] != dim:
            raise InputError(f"points have dimension {x.shape[1]}, body has dimension {dim}")
        return x, False
    raise InputError(f"expected point or batch of points, got array of shape {x.shape}")


def _unbatch(out, single):
    return out[0] if single else out


class ConvexBody:
    """Base class; concrete bodies are Ball, Box and Polytope."""

    dim: int
    diameter: float
    inradius: float

    # -- operations ---------------------------------------------------------

    def project(self, x):
        """Euclidean projection onto the body (nearest member point)."""
        xb, single = _as_batch(x, self.dim)
        return _unbatch(self._project(xb), single)

    def gauge(self, x):
        """Minkowski gauge inf{t > 0 : x in t*body}; 0 at the origin."""
        xb, single = _as_batch(x, self.dim)
        return _unbatch(self._gauge(xb), single)

    def support(self, d):
        """Support function sup{y.d : y in body}."""
        db, single = _as_batch(d, self.dim)
        return _unbatch(self._support(db), single)

    def contains(self, x, tol=MEMBERSHIP_TOL):
        """Membership test with absolute tolerance ``tol``."""
        xb, single = _as_batch(x, self.dim)
        return _unbatch(self._contains(xb, tol), single)

    def sample_uniform(self, rng, size=None):
        """Draw points uniformly from the body using the given Generator.

        Returns shape ``(n,)`` when ``size`` is None, else ``(size, n)``.
        """
        m = 1 if size is None else int(size)
        out = self._sample(rng, m)
        return out[0] if size is None else out

    def max_norm(self):
        """sup ||x|| over the body (always <= diameter since the body contains 0)."""
        raise NotImplementedError

    def bounding_box(self):
        """Componentwise (lower, upper) bounds enclosing the body."""
        raise NotImplementedError

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        raise NotImplementedError

    # internals implemented by subclasses
    def _project(self, xb):
        raise NotImplementedError

    def _gauge(self, xb):
        raise NotImplementedError

    def _support(self, db):
        raise NotImplementedError

    def _contains(self, xb, tol):
        raise NotImplementedError

    def _sample(self, rng, m):
        raise NotImplementedError


class Ball(ConvexBody):
    """Euclidean ball; the origin must lie strictly inside."""

    def __init__(self, center, radius):
        center = np.atleast_1d(np.asarray(center, dtype=np.float64))
        radius = float(radius)
        if radius <= 0:
            raise InputError("ball radius must be positive")
        if center.ndim != 1:
            raise InputError("ball center must be a vector")
        self.center = center
        self.radius = radius
        self.dim = center.shape[0]
        self.inradius = radius - float(np.linalg.norm(center))
        if self.inradius <= 0:
            raise InvariantViolation(
                "origin is not strictly inside the ball; an origin-centered inscribed "
                "ball of positive radius is required"
            )
        self.diameter = 2.0 * radius

    def _project(self, xb):
        d = xb - self.center
        nrm = np.linalg.norm(d, axis=1)
        scale = np.ones_like(nrm)
        out = nrm > self.radius
        scale[out] = self.radius / nrm[out]
        return self.center + d * scale[:, None]

    def _gauge(self, xb):
        # positive root of ||x - t c||^2 = (t R)^2 in t
        kappa = self.radius**2 - self.center @ self.center
        xc = xb @ self.center
        s = np.sqrt(xc**2 + kappa * np.einsum("ij,ij->i", xb, xb))
        return (s - xc) / kappa

    def _support(self, db):
        return db @ self.center + self.radius * np.linalg.norm(db, axis=1)

    def _contains(self, xb, tol):
        return np.linalg.norm(xb - self.center, axis=1) <= self.radius + tol

    def _sample(self, rng, m):
        g = rng.standard_normal((m, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        u = rng.uniform(size=m) ** (1.0 / self.dim)
        return self.center + self.radius * u[:, None] * g

    def max_norm(self):
        return float(np.linalg.norm(self.center)) + self.radius

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def to_dict(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"


class Box(ConvexBody):
    """Axis-aligned box [lower, upper]; must contain the origin strictly."""

    def __init__(self, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=np.float64))
        upper = np.atleast_1d(np.asarray(upper, dtype=np.float64))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise InputError("box bounds must be vectors of equal length")
        if not np.all(lower < 0) or not np.all(upper > 0):
            raise InvariantViolation(
                "box must contain the origin strictly (lower < 0 < upper componentwise)"
            )
        self.lower = lower
        self.upper = upper
        self.dim = lower.shape[0]
        self.inradius = float(min(np.min(upper), np.min(-lower)))
        self.diameter = float(np.linalg.norm(upper - lower))

    def _project(self, xb):
        return np.clip(xb, self.lower, self.upper)

    def _gauge(self, xb):
        ratios = np.maximum(xb / self.upper, xb / self.lower)
        return np.maximum(np.max(ratios, axis=1), 0.0)

    def _support(self, db):
        return np.sum(np.maximum(db * self.lower, db * self.upper), axis=1)

    def _contains(self, xb, tol):
        return np.all((xb >= self.lower - tol) & (xb <= self.upper + tol), axis=1)

    def _sample(self, rng, m):
        return rng.uniform(self.lower, self.upper, size=(m, self.dim))

    def max_norm(self):
        return float(np.sqrt(np.sum(np.maximum(self.lower**2, self.upper**2))))

    def bounding_box(self):
        return self.lower.copy(), self.upper.copy()

    def to_dict(self):
        return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


class Polytope(ConvexBody):
    """Bounded polytope {x : A x <= b} with user-supplied diameter and inradius.

    The origin must be strictly interior (b > 0). Vertices are enumerated at
    construction, which both certifies boundedness and provides the exact
    support-function optimum; projection uses Dykstra's alternating scheme
    over the half-spaces.
    """

    def __init__(self, A, b, diameter, inradius):
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        b = np.atleast_1d(np.asarray(b, dtype=np.float64))
        if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
            raise InputError("A must be (m, n) and b must be (m,) with matching rows")
        self.A = A
        self.b = b
        self.dim = A.shape[1]
        self._row_norms = np.linalg.norm(A, axis=1)
        if np.any(self._row_norms == 0):
            raise InputError("polytope constraint rows must be nonzero")
        if np.any(b <= 0):
            raise InvariantViolation("origin must be strictly interior: all b > 0")

        inradius = float(inradius)
        diameter = float(diameter)
        if inradius <= 0 or diameter <= 0:
            raise InputError("diameter and inradius must be positive")
        # extreme points of the r-ball in each constraint direction must be feasible
        if np.any(inradius * self._row_norms > b + 1e-12):
            raise InvariantViolation(
                "declared inradius ball does not fit inside the polytope"
            )
        self.inradius = inradius

        self._vertices = self._enumerate_vertices()
        vdiam = self._vertex_diameter()
        if diameter < vdiam - 1e-9:
            raise InvariantViolation(
                f"declared diameter {diameter} is below the actual diameter {vdiam:.12g}"
            )
        self.diameter = diameter

    def _enumerate_vertices(self):
        from scipy.spatial import HalfspaceIntersection, QhullError

        halfspaces = np.hstack([self.A, -self.b[:, None]])
        try:
            hs = HalfspaceIntersection(halfspaces, np.zeros(self.dim))
        except QhullError as exc:
            raise InvariantViolation(f"polytope is unbounded or degenerate: {exc}") from exc
        verts = np.asarray(hs.intersections, dtype=np.float64)
        if verts.size == 0 or not np.all(np.isfinite(verts)):
            raise InvariantViolation("polytope is unbounded (vertex enumeration failed)")
        return verts

    def _vertex_diameter(self):
        v = self._vertices
        d2 = np.sum((v[:, None, :] - v[None, :, :]) ** 2, axis=-1)
        return float(np.sqrt(d2.max()))

    @property
    def vertices(self):
        return self._vertices.copy()

    def _project(self, xb):
        inside = self._contains(xb, 0.0)
        out = xb.copy()
        if np.all(inside):
            return out
        x = xb[~inside]
        corrections = np.zeros((self.A.shape[0],) + x.shape)
        for _ in range(DYKSTRA_MAX_SWEEPS):
            x_prev = x.copy()
            for i in range(self.A.shape[0]):
                a, bi = self.A[i], self.b[i]
                y = x + corrections[i]
                viol = np.maximum(y @ a - bi, 0.0) / (a @ a)
                x = y - viol[:, None] * a
                corrections[i] = y - x
            if np.max(np.abs(x - x_prev)) <= DYKSTRA_TOL:
                break
        else:
            raise NumericError("Dykstra projection did not converge")
        out[~inside] = x
        return out

    def _gauge(self, xb):
        # x in t*K  <=>  a_i.x <= t b_i for all i (valid because b > 0)
        return np.maximum(np.max((xb @ self.A.T) / self.b, axis=1), 0.0)

    def _support(self, db):
        # the LP max d.y s.t. Ay <= b attains its optimum at a vertex
        return np.max(db @ self._vertices.T, axis=1)

    def support_lp(self, d):
        """Support value via an explicit linear program (cross-check path)."""
        from scipy.optimize import linprog

        d = np.asarray(d, dtype=np.float64)
        if d.shape != (self.dim,):
            raise InputError("direction has wrong dimension")
        res = linprog(-d, A_ub=self.A, b_ub=self.b, bounds=[(None, None)] * self.dim,
                      method="highs")
        if res.status == 3:
            raise InvariantViolation("support LP is unbounded; polytope is not compact")
        if not res.success:
            raise NumericError(f"support LP failed: {res.message}")
        return float(-res.fun)

    def _contains(self, xb, tol):
        slack = xb @ self.A.T - self.b
        return np.all(slack <= tol * self._row_norms, axis=1)

    def _sample(self, rng, m):
        lo, hi = self.bounding_box()
        out = np.empty((m, self.dim))
        have = 0
        proposed = 0
        accepted = 0
        while have < m:
            batch = max(1024, 2 * (m - have))
            cand = rng.uniform(lo, hi, size=(batch, self.dim))
            ok = cand[self._contains(cand, 0.0)]
            proposed += batch
            accepted += len(ok)
            take = min(len(ok), m - have)
            out[have:have + take] = ok[:take]
            have += take
            if proposed >= 10_000_000 and accepted / proposed < 1e-6:
                raise DegenerateGeometryError(
                    "rejection sampling acceptance rate below 1e-6; polytope is "
                    "degenerate relative to its bounding box"
                )
        return out

    def max_norm(self):
        return float(np.max(np.linalg.norm(self._vertices, axis=1)))

    def bounding_box(self):
        return self._vertices.min(axis=0), self._vertices.max(axis=0)

    def to_dict(self):
        return {"kind": "polytope", "A": self.A.tolist(), "b": self.b.tolist(),
                "diameter": self.diameter, "inradius": self.inradius}

    def __repr__(self):
        return f"Polytope({self.A.shape[0]} halfspaces, dim={self.dim})"


def body_from_dict(spec) -> ConvexBody:
    """Construct a body from its tagged-record description (see config files)."""
    try:
        kind = spec["kind"]
    except (TypeError, KeyError) as exc:
        raise InputError("body description must be a mapping with a 'kind' field") from exc
    if kind == "ball":
        return Ball(spec["center"], spec["radius"])
    if kind == "box":
        return Box(spec["lower"], spec["upper"])
    if kind == "polytope":
        return Polytope(spec["A"], spec["b"], spec["diameter"], spec["inradius"])
    raise InputError(f"unknown body kind {kind!r}")
