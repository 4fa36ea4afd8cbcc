"""Ground-truth Gibbs sampling, empirical Wasserstein distances and rate fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InputError, TemperatureError, UnknownMinimumError
from .geometry import ConvexBody
from .oracle import StochasticLoss

_PROPOSAL_BATCH = 8192
_MATCH_SEED = 0  # default seed for batch-size matching; callers may override


@dataclass
class GibbsBatch:
    """Exact samples from the target density proportional to e^{-beta fbar} on K."""

    samples: np.ndarray
    acceptance_rate: float
    proposals: int


def gibbs_rejection_sample(body: ConvexBody, loss: StochasticLoss, beta, count,
                           rng) -> GibbsBatch:
    """Rejection sampling with uniform proposals on the body.

    Accepts x with probability exp(-beta (fbar(x) - f_lo)) where f_lo is the
    loss's declared lower bound on the body, so the accepted draws follow the
    target exactly. Draw order per proposal batch: points, then uniforms.
    """
    count = int(count)
    if count < 1:
        raise InputError("count must be positive")
    f_lo, _ = loss.bounds_on(body)
    out = np.empty((count, body.dim))
    have = 0
    proposals = 0
    accepted = 0
    while have < count:
        x = body.sample_uniform(rng, _PROPOSAL_BATCH)
        u = rng.uniform(size=_PROPOSAL_BATCH)
        keep = u <= np.exp(-beta * (loss.mean(x) - f_lo))
        ok = x[keep]
        proposals += _PROPOSAL_BATCH
        accepted += len(ok)
        take = min(len(ok), count - have)
        out[have:have + take] = ok[:take]
        have += take
        if proposals >= 10_000_000 and accepted / proposals < 1e-6:
            raise TemperatureError(
                f"acceptance rate {accepted / proposals:.2e} after {proposals} proposals; "
                "reduce beta or restrict the domain"
            )
    return GibbsBatch(samples=out, acceptance_rate=accepted / proposals,
                      proposals=proposals)


def _match_sizes(a, b, match_rng):
    if len(a) == len(b):
        return a, b
    rng = match_rng if match_rng is not None else np.random.default_rng(_MATCH_SEED)
    if len(a) > len(b):
        return a[rng.choice(len(a), size=len(b), replace=False)], b
    return a, b[rng.choice(len(b), size=len(a), replace=False)]


def w1_exact_1d(a, b, match_rng=None):
    """Exact 1-Wasserstein distance between two 1-d sample batches.

    Equal sizes: mean absolute difference of order statistics. Unequal sizes:
    the larger batch is uniformly subsampled first (seed 0 unless a matching
    Generator is supplied).
    """
    a = np.ravel(np.asarray(a, dtype=np.float64))
    b = np.ravel(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise InputError("empty sample batch")
    a, b = _match_sizes(a, b, match_rng)
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def w1_sliced(a, b, directions=64, rng=None, match_rng=None):
    """Sliced W1: average of exact 1-d distances over random unit directions.

    A lower-bound-flavored surrogate for the multivariate distance; use it
    only for relative comparisons, never against the theoretical constants.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise InputError("batches have different dimensions")
    if directions < 32:
        raise InputError("use at least 32 directions")
    if rng is None:
        rng = np.random.default_rng(_MATCH_SEED)
    total = 0.0
    for _ in range(int(directions)):
        d = rng.standard_normal(a.shape[1])
        d /= np.linalg.norm(d)
        total += w1_exact_1d(a @ d, b @ d, match_rng=match_rng)
    return total / int(directions)


def w1_bootstrap_ci(a, b, rng, resamples=1000, level=0.95):
    """Percentile bootstrap CI for w1_exact_1d(a, b); resamples both batches."""
    a = np.ravel(np.asarray(a, dtype=np.float64))
    b = np.ravel(np.asarray(b, dtype=np.float64))
    vals = np.empty(resamples)
    for i in range(resamples):
        ra = a[rng.integers(0, len(a), size=len(a))]
        rb = b[rng.integers(0, len(b), size=len(b))]
        vals[i] = w1_exact_1d(ra, rb, match_rng=rng)
    alpha = (1.0 - level) / 2.0
    return float(np.quantile(vals, alpha)), float(np.quantile(vals, 1.0 - alpha))


@dataclass
class SuboptimalityEstimate:
    value: float
    ci_lo: float
    ci_hi: float
    minimum_used: float


def suboptimality_estimate(body: ConvexBody, loss: StochasticLoss, batch,
                           rng=None, resamples=1000, known_min=None):
    """Mean of fbar over a terminal batch minus the known minimum, with a
    percentile bootstrap CI."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if known_min is None:
        try:
            known_min = loss.min_on(body)
        except UnknownMinimumError:
            raise InputError(
                "the loss has no closed-form minimum here; pass known_min explicitly"
            ) from None
    vals = loss.mean(batch) - known_min
    est = float(np.mean(vals))
    if rng is None:
        rng = np.random.default_rng(_MATCH_SEED)
    boots = np.empty(resamples)
    for i in range(resamples):
        boots[i] = np.mean(vals[rng.integers(0, len(vals), size=len(vals))])
    return SuboptimalityEstimate(value=est,
                                 ci_lo=float(np.quantile(boots, 0.025)),
                                 ci_hi=float(np.quantile(boots, 0.975)),
                                 minimum_used=float(known_min))


@dataclass
class RateFit:
    """Log-log decay fit of W1 against T.

    ``exponent`` is the plain power-law slope; ``shape_coef`` regresses
    log W1 on log(T^{-1/4} (log T)^{1/2}) instead (a coefficient of 1 means
    the decay matches that reference shape exactly).
    """

    exponent: float
    intercept: float
    stderr: float
    shape_coef: float
    shape_intercept: float
    shape_stderr: float
    clipped: bool


def _ols(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    dof = len(x) - 2
    if dof > 0:
        rss = float(np.sum((y - slope * x - intercept) ** 2))
        stderr = math.sqrt(rss / dof / sxx)
    else:
        stderr = 0.0
    return slope, intercept, stderr


def rate_fit(ts, w1s) -> RateFit:
    """Ordinary least squares of log W1 against log T over the checkpoints."""
    ts = np.asarray(ts, dtype=np.float64)
    w1s = np.array(w1s, dtype=np.float64)
    if len(ts) < 4:
        raise InputError("rate_fit needs at least 4 checkpoints")
    if ts.max() / ts.min() < 100.0:
        raise InputError("checkpoints should span at least two decades of T")
    clipped = False
    if np.any(w1s <= 0):
        positive = w1s[w1s > 0]
        floor = float(positive.min()) if positive.size else 1e-300
        w1s = np.maximum(w1s, floor)
        clipped = True
    lt, lw = np.log(ts), np.log(w1s)
    slope, intercept, stderr = _ols(lt, lw)
    shape = -0.25 * lt + 0.5 * np.log(np.log(ts))
    s2, i2, se2 = _ols(shape, lw)
    return RateFit(exponent=slope, intercept=intercept, stderr=stderr,
                   shape_coef=s2, shape_intercept=i2, shape_stderr=se2,
                   clipped=clipped)


def ks_statistic(samples, cdf):
    """Kolmogorov-Smirnov distance between a sample batch and a CDF callable."""
    x = np.sort(np.ravel(np.asarray(samples, dtype=np.float64)))
    n = len(x)
    f = np.asarray(cdf(x), dtype=np.float64)
    grid = np.arange(1, n + 1) / n
    return float(max(np.max(np.abs(grid - f)), np.max(np.abs(grid - 1.0 / n - f))))


def gibbs_cdf_1d(body: ConvexBody, loss: StochasticLoss, beta, gridpoints=200001):
    """Quadrature CDF of the Gibbs target on a 1-d body; returns a callable."""
    if body.dim != 1:
        raise InputError("gibbs_cdf_1d requires a 1-d body")
    lo, hi = body.bounding_box()
    xs = np.linspace(float(lo[0]), float(hi[0]), gridpoints)
    dens = np.exp(-beta * loss.mean(xs[:, None]))
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * np.diff(xs) / 2.0)])
    cdf /= cdf[-1]

    def F(x):
        return np.interp(x, xs, cdf)

    return F


@dataclass
class EmpiricalReport:
    """Per-checkpoint W1 estimates, the rate fit and pass flags."""

    checkpoints: list = field(default_factory=list)  # dicts: T, eta, w1, ci_lo, ci_hi, bound
    fit: Optional[RateFit] = None
    monotone_within_ci: Optional[bool] = None
    exponent_ok: Optional[bool] = None
    bound_above_all: Optional[bool] = None
    gibbs_acceptance: Optional[float] = None
    seeds: dict = field(default_factory=dict)
    sample_counts: dict = field(default_factory=dict)

    def passed(self):
        flags = [self.monotone_within_ci, self.exponent_ok, self.bound_above_all]
        return all(f for f in flags if f is not None)

    def to_dict(self):
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None
            return v
        d = {
            "checkpoints": [{k: clean(v) for k, v in c.items()} for c in self.checkpoints],
            "monotone_within_ci": self.monotone_within_ci,
            "exponent_ok": self.exponent_ok,
            "bound_above_all": self.bound_above_all,
            "gibbs_acceptance": self.gibbs_acceptance,
            "seeds": self.seeds,
            "sample_counts": self.sample_counts,
        }
        if self.fit is not None:
            d["fit"] = {k: clean(getattr(self.fit, k))
                        for k in self.fit.__dataclass_fields__}
        return d
