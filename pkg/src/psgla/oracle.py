"""Stochastic losses f(x, z) with gradient oracles and their declared constants.

A loss bundles a smooth mean family with an additive gradient-noise model:

    grad f(x, z) = grad fbar(x) + z,       z drawn i.i.d. per step.

Built-in families: quadratic bowl, double well (two global minima separated by
a barrier, the canonical case where plain projected SGD stalls), and a seeded
random trigonometric family with closed-form smoothness constants.

Declared constants are true upper bounds (closed form); ``estimate_constants``
only validates them empirically.
"""
from __future__ import annotations

import warnings

import numpy as np

from .errors import InputError, NumericError, UnknownMinimumError
from .geometry import ConvexBody


# ---------------------------------------------------------------------------
# noise models
# ---------------------------------------------------------------------------

class NoiseModel:
    """Distribution of the additive gradient perturbation z."""

    def sample(self, rng, size, dim):
        """Draw ``size`` perturbations of dimension ``dim``; shape (size, dim)."""
        raise NotImplementedError

    def mean_shift(self, dim):
        """E[z]; nonzero only for data-driven noise."""
        return np.zeros(dim)

    def subgauss_param(self, dim):
        """Uniform sub-Gaussian parameter of z - E[z]."""
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


class AdditiveGaussian(NoiseModel):
    """z ~ N(0, scale^2 I). Sub-Gaussian parameter equals ``scale`` exactly."""

    def __init__(self, scale):
        if scale < 0:
            raise InputError("noise scale must be nonnegative")
        self.scale = float(scale)

    def sample(self, rng, size, dim):
        return self.scale * rng.standard_normal((size, dim))

    def subgauss_param(self, dim):
        return self.scale

    def to_dict(self):
        return {"kind": "gaussian", "scale": self.scale}


class AdditiveBoundedUniform(NoiseModel):
    """Independent coordinates uniform on [-halfwidth, halfwidth].

    MGF bound: E exp(a z_i) = sinh(a h)/(a h) <= exp(a^2 h^2 / 6), so the
    sub-Gaussian parameter is halfwidth / sqrt(3).
    """

    def __init__(self, halfwidth):
        if halfwidth < 0:
            raise InputError("halfwidth must be nonnegative")
        self.halfwidth = float(halfwidth)

    def sample(self, rng, size, dim):
        return rng.uniform(-self.halfwidth, self.halfwidth, size=(size, dim))

    def subgauss_param(self, dim):
        return self.halfwidth / np.sqrt(3.0)

    def to_dict(self):
        return {"kind": "uniform", "halfwidth": self.halfwidth}


class DataDriven(NoiseModel):
    """IID draws from a finite dataset of z rows.

    The dataset mean is folded into the mean gradient of any loss using this
    model; the sub-Gaussian parameter is the (conservative) Hoeffding bound
    max ||z_i - mean(z)||.
    """

    def __init__(self, samples):
        samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        if samples.size == 0:
            raise InputError("data-driven noise requires a nonempty dataset")
        if not np.all(np.isfinite(samples)):
            raise InputError("dataset contains non-finite values")
        self.samples = samples

    def sample(self, rng, size, dim):
        if self.samples.shape[1] != dim:
            raise InputError(
                f"dataset rows have dimension {self.samples.shape[1]}, expected {dim}"
            )
        idx = rng.integers(0, self.samples.shape[0], size=size)
        return self.samples[idx]

    def mean_shift(self, dim):
        if self.samples.shape[1] != dim:
            raise InputError("dataset dimension mismatch")
        return self.samples.mean(axis=0)

    def subgauss_param(self, dim):
        centered = self.samples - self.samples.mean(axis=0)
        return float(np.max(np.linalg.norm(centered, axis=1)))

    def to_dict(self):
        return {"kind": "data", "samples": self.samples.tolist()}


def noise_from_dict(spec) -> NoiseModel:
    kind = spec.get("kind", "gaussian")
    if kind == "gaussian":
        return AdditiveGaussian(spec.get("scale", 0.0))
    if kind == "uniform":
        return AdditiveBoundedUniform(spec.get("halfwidth", 0.0))
    if kind == "data":
        if "csv" in spec:
            data = np.loadtxt(spec["csv"], delimiter=",", ndmin=2)
            return DataDriven(data)
        return DataDriven(spec["samples"])
    raise InputError(f"unknown noise kind {kind!r}")


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

class StochasticLoss:
    """Mean family plus additive noise; exposes values, gradients and constants."""

    kernel_code = -1  # numba fast-path id; -1 means unsupported

    def __init__(self, dim, noise: NoiseModel):
        self.dim = int(dim)
        self.noise = noise
        self._shift = noise.mean_shift(self.dim)

    # family-level pieces (no noise shift), implemented by subclasses
    def _family_mean(self, xb):
        raise NotImplementedError

    def _family_grad(self, xb):
        raise NotImplementedError

    def _family_lipschitz(self, body: ConvexBody):
        raise NotImplementedError

    def _family_grad_bound(self, body: ConvexBody):
        raise NotImplementedError

    # public surface -------------------------------------------------------

    def mean(self, x):
        """fbar(x) = E_z f(x, z)."""
        xb, single = _batch(x, self.dim)
        out = self._family_mean(xb) + xb @ self._shift
        return out[0] if single else out

    def mean_grad(self, x):
        """grad fbar(x), closed form."""
        xb, single = _batch(x, self.dim)
        out = self._family_grad(xb) + self._shift
        return out[0] if single else out

    def noisy_grad(self, x, z):
        """grad f(x, z); deterministic given (x, z)."""
        xb, single = _batch(x, self.dim)
        zb, _ = _batch(z, self.dim)
        out = self._family_grad(xb) + zb
        if not np.all(np.isfinite(out)):
            bad = xb[~np.all(np.isfinite(out), axis=1)][0]
            raise NumericError(f"non-finite gradient at x={bad.tolist()}")
        return out[0] if single else out

    def sample_z(self, rng, size=None):
        m = 1 if size is None else int(size)
        out = self.noise.sample(rng, m, self.dim)
        return out[0] if size is None else out

    # declared constants ----------------------------------------------------

    def lipschitz(self, body: ConvexBody):
        """Gradient Lipschitz constant on the body (noise is additive, so the
        family constant carries over)."""
        return self._family_lipschitz(body)

    def grad_bound(self, body: ConvexBody):
        """u = sup ||grad fbar|| over the body."""
        return self._family_grad_bound(body) + float(np.linalg.norm(self._shift))

    def subgauss(self):
        """Uniform sub-Gaussian parameter of grad f(x,z) - grad fbar(x)."""
        return self.noise.subgauss_param(self.dim)

    @property
    def mean_shift(self):
        """E[z]; the offset between the family gradient and grad fbar."""
        return self._shift.copy()

    def min_on(self, body: ConvexBody):
        """Exact minimum of fbar over the body; raises when not closed-form."""
        raise UnknownMinimumError(
            f"{type(self).__name__} has no closed-form minimum on this body; "
            "supply known_minimum in the config"
        )

    def bounds_on(self, body: ConvexBody):
        """Finite (lower, upper) bounds of fbar on the body.

        The lower bound feeds the Gibbs rejection sampler; it need not be
        attained, only valid.
        """
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


def _batch(x, dim):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != dim:
            raise InputError(f"point has dimension {x.shape[0]}, loss has dimension {dim}")
        return x[None, :], True
    if x.ndim != 2 or x.shape[1] != dim:
        raise InputError(f"bad point array shape {x.shape} for dimension {dim}")
    return x, False


class QuadraticBowl(StochasticLoss):
    """fbar(x) = ||x||^2 / 2; grad f(x,z) = x + z."""

    kernel_code = 0

    def _family_mean(self, xb):
        return 0.5 * np.einsum("ij,ij->i", xb, xb)

    def _family_grad(self, xb):
        return xb

    def _family_lipschitz(self, body):
        return 1.0

    def _family_grad_bound(self, body):
        return body.max_norm()

    def min_on(self, body):
        if np.linalg.norm(self._shift) > 0:
            raise UnknownMinimumError(
                "quadratic bowl with a data-driven mean shift has no recorded minimum"
            )
        return 0.0  # the body contains the origin

    def bounds_on(self, body):
        s = body.max_norm()
        shift = float(np.linalg.norm(self._shift))
        return (-shift * s, 0.5 * s * s + shift * s)

    def to_dict(self):
        return {"kind": "quadratic", "dim": self.dim, "noise": self.noise.to_dict()}


class DoubleWell(StochasticLoss):
    """fbar(x) = (||x||^2 - q)^2 with q = well_radius^2 (default 0.25).

    Two global minima at ||x|| = well_radius separated by a barrier of height
    q^2 at the origin.
    """

    kernel_code = 1

    def __init__(self, dim, noise: NoiseModel, well_radius_sq=0.25):
        super().__init__(dim, noise)
        if well_radius_sq <= 0:
            raise InputError("well radius must be positive")
        self.q = float(well_radius_sq)

    def _family_mean(self, xb):
        r2 = np.einsum("ij,ij->i", xb, xb)
        return (r2 - self.q) ** 2

    def _family_grad(self, xb):
        r2 = np.einsum("ij,ij->i", xb, xb)
        return 4.0 * (r2 - self.q)[:, None] * xb

    def _family_lipschitz(self, body):
        # Hessian eigenvalues are 12 s^2 - 4q (radial) and 4(s^2 - q), s = ||x||
        s2 = body.max_norm() ** 2
        return max(4.0 * self.q, 12.0 * s2 - 4.0 * self.q)

    def _family_grad_bound(self, body):
        # ||grad|| = 4 s |s^2 - q|; maximize over s in [0, S]
        s = body.max_norm()
        q = self.q
        best = 0.0
        if s * s >= q:
            best = 4.0 * s * (s * s - q)
        inner = min(s, np.sqrt(q / 3.0))
        best = max(best, 4.0 * inner * (q - inner * inner))
        return best

    def min_on(self, body):
        if np.linalg.norm(self._shift) > 0:
            raise UnknownMinimumError("double well with mean shift has no recorded minimum")
        s = body.max_norm()
        if s * s >= self.q:
            # the body is connected and contains 0, so it holds a point of
            # every norm up to s; the sphere ||x||^2 = q is reached
            return 0.0
        return float((s * s - self.q) ** 2)

    def bounds_on(self, body):
        s2 = body.max_norm() ** 2
        shift = float(np.linalg.norm(self._shift))
        span = shift * body.max_norm()
        return (-span, max((s2 - self.q) ** 2, self.q**2) + span)

    def to_dict(self):
        return {"kind": "double_well", "dim": self.dim, "well_radius_sq": self.q,
                "noise": self.noise.to_dict()}


class TrigSum(StochasticLoss):
    """Seeded random non-convex family fbar(x) = sum_i c_i cos(w_i.x + p_i).

    Frequencies are bounded so the smoothness constants are closed form:
    u <= sum |c_i| ||w_i||,  l <= sum |c_i| ||w_i||^2.
    """

    kernel_code = 2

    def __init__(self, dim, noise: NoiseModel, terms=5, seed=0, amplitude=1.0,
                 max_frequency=3.0):
        super().__init__(dim, noise)
        r = np.random.default_rng(seed)
        self.coeffs = amplitude * r.uniform(0.5, 1.0, size=terms)
        self.freqs = r.uniform(-max_frequency, max_frequency, size=(terms, dim))
        self.phases = r.uniform(0, 2 * np.pi, size=terms)
        self._seed = int(seed)
        self._amplitude = float(amplitude)
        self._max_frequency = float(max_frequency)

    def _family_mean(self, xb):
        phase = xb @ self.freqs.T + self.phases
        return np.cos(phase) @ self.coeffs

    def _family_grad(self, xb):
        phase = xb @ self.freqs.T + self.phases
        return -(np.sin(phase) * self.coeffs) @ self.freqs

    def _family_lipschitz(self, body):
        return float(np.sum(np.abs(self.coeffs) * np.sum(self.freqs**2, axis=1)))

    def _family_grad_bound(self, body):
        return float(np.sum(np.abs(self.coeffs) * np.linalg.norm(self.freqs, axis=1)))

    def bounds_on(self, body):
        span = float(np.sum(np.abs(self.coeffs)))
        shift = float(np.linalg.norm(self._shift)) * body.max_norm()
        return (-span - shift, span + shift)

    def to_dict(self):
        return {"kind": "trig", "dim": self.dim, "terms": len(self.coeffs),
                "seed": self._seed, "amplitude": self._amplitude,
                "max_frequency": self._max_frequency, "noise": self.noise.to_dict()}


class LinearLoss(StochasticLoss):
    """fbar(x) = g.x (constant gradient, l = 0); useful for degenerate checks."""

    kernel_code = 3

    def __init__(self, slope, noise: NoiseModel):
        slope = np.atleast_1d(np.asarray(slope, dtype=np.float64))
        super().__init__(slope.shape[0], noise)
        self.slope = slope

    def _family_mean(self, xb):
        return xb @ self.slope

    def _family_grad(self, xb):
        return np.broadcast_to(self.slope, xb.shape).copy()

    def _family_lipschitz(self, body):
        return 0.0

    def _family_grad_bound(self, body):
        return float(np.linalg.norm(self.slope))

    def min_on(self, body):
        if np.linalg.norm(self._shift) > 0:
            raise UnknownMinimumError("linear loss with mean shift has no recorded minimum")
        return -float(body.support(-self.slope))

    def bounds_on(self, body):
        g = self.slope + self._shift
        return (-float(body.support(-g)), float(body.support(g)))

    def to_dict(self):
        return {"kind": "linear", "slope": self.slope.tolist(),
                "noise": self.noise.to_dict()}


def loss_from_dict(spec) -> StochasticLoss:
    try:
        kind = spec["kind"]
    except (TypeError, KeyError) as exc:
        raise InputError("loss description must be a mapping with a 'kind' field") from exc
    noise = noise_from_dict(spec.get("noise", {"kind": "gaussian", "scale": 0.0}))
    if kind == "quadratic":
        return QuadraticBowl(spec["dim"], noise)
    if kind == "double_well":
        return DoubleWell(spec["dim"], noise, spec.get("well_radius_sq", 0.25))
    if kind == "trig":
        return TrigSum(spec["dim"], noise, terms=spec.get("terms", 5),
                       seed=spec.get("seed", 0), amplitude=spec.get("amplitude", 1.0),
                       max_frequency=spec.get("max_frequency", 3.0))
    if kind == "linear":
        return LinearLoss(spec["slope"], noise)
    raise InputError(f"unknown loss kind {kind!r}")


# ---------------------------------------------------------------------------
# empirical validation of the declared constants
# ---------------------------------------------------------------------------

def estimate_constants(loss: StochasticLoss, body: ConvexBody, samples, rng):
    """Empirical (lower-bound) estimates (l_hat, u_hat, sigma_hat).

    l_hat maximizes the gradient-difference ratio over random pairs in the
    body, u_hat maximizes ||grad fbar|| over uniform points, and sigma_hat is
    fitted from the empirical moment generating function of the gradient
    noise along random unit directions. A warning is emitted whenever an
    estimate exceeds the declared constant.
    """
    samples = int(samples)
    if samples < 1000:
        raise InputError("estimate_constants needs at least 10^3 samples")

    x1 = body.sample_uniform(rng, samples)
    x2 = body.sample_uniform(rng, samples)
    z = loss.sample_z(rng, samples)
    g1 = loss.noisy_grad(x1, z)
    g2 = loss.noisy_grad(x2, z)
    dist = np.linalg.norm(x1 - x2, axis=1)
    keep = dist > 1e-12
    l_hat = float(np.max(np.linalg.norm(g1 - g2, axis=1)[keep] / dist[keep]))

    u_hat = float(np.max(np.linalg.norm(loss.mean_grad(x1), axis=1)))

    # MGF fit: for unit alpha, E exp(t a.g) <= exp(sigma^2 t^2 / 2)
    x0 = body.sample_uniform(rng)
    noise = loss.noisy_grad(np.tile(x0, (samples, 1)), loss.sample_z(rng, samples)) \
        - loss.mean_grad(x0)
    sigma_hat = 0.0
    for _ in range(20):
        alpha = rng.standard_normal(loss.dim)
        alpha /= np.linalg.norm(alpha)
        proj = noise @ alpha
        scale = max(float(np.std(proj)), 1e-12)
        for t in (0.25 / scale, 0.5 / scale, 1.0 / scale):
            mgf = float(np.mean(np.exp(t * proj)))
            if mgf > 1.0:
                sigma_hat = max(sigma_hat, np.sqrt(2.0 * np.log(mgf)) / t)

    decl = (loss.lipschitz(body), loss.grad_bound(body), loss.subgauss())
    for name, est, d in zip(("lipschitz", "grad bound", "subgauss"),
                            (l_hat, u_hat, sigma_hat), decl):
        if est > d * (1 + 1e-9) + 1e-12:
            warnings.warn(
                f"empirical {name} estimate {est:.6g} exceeds declared constant {d:.6g}",
                stacklevel=2,
            )
    return l_hat, u_hat, sigma_hat
