"""Reflection coupling of chain pairs and the contraction distance function h.

h solves the damped-oscillator equation

    omega_N^2 h + 2 xi omega_N h' + h'' = 0,   h(0) = 0, h'(0) = 1,

whose closed forms (trigonometric when underdamped, hyperbolic when
overdamped) make exp(eta a t) h(||x1_t - x2_t||) a supermartingale for
reflection-coupled chains. ``supermartingale_check`` tests that property
empirically.

Discrete chains cannot hit each other exactly, so the pair driver couples the
Gaussian increments maximally: chain 2 reuses chain 1's increment shifted by
the proposal-mean gap with the Metropolis-style acceptance probability
phi(w + delta)/phi(w) (exact meeting), and otherwise reflects it across the
line joining the chains. Merged pairs share their update exactly from then
on. A distance threshold of 1e-8 * D also merges pairs, as a guard.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constants import ProblemData, contraction_constants, problem_data
from .errors import DegenerateDampingError, InputError
from .geometry import ConvexBody
from .oracle import StochasticLoss
from .sampler import chain_seed

COUPLING_THRESHOLD = 1e-8   # merge when ||x1 - x2|| <= threshold * D
CRITICAL_BAND = 1e-6        # |xi - 1| below this: use the critical-damping limit
_BLOCK = 512


@dataclass(frozen=True)
class OscillatorSolution:
    """Damped-oscillator distance function on [0, D].

    ``wx`` and ``ws`` are the stable products omega_N * xi and
    omega_N * sqrt(|xi^2 - 1|); they stay finite even when xi overflows.
    """

    omega_n: float
    xi: float
    D: float
    wx: float
    ws: float
    regime: str   # "underdamped" | "overdamped" | "critical"

    def h(self, x):
        """Evaluate h; accepts a scalar or array in [0, D]."""
        arr = np.asarray(x, dtype=np.float64)
        if np.any(arr < -1e-12) or np.any(arr > self.D * (1 + 1e-9) + 1e-12):
            raise InputError(f"argument outside [0, {self.D}]")
        arr = np.clip(arr, 0.0, self.D)
        if self.regime == "critical":
            out = arr * np.exp(-self.omega_n * arr)
        elif self.regime == "underdamped":
            z = self.ws * arr
            sinc = np.where(z > 0, np.divide(np.sin(z), np.where(z > 0, z, 1.0)), 1.0)
            out = arr * np.exp(-self.wx * arr) * sinc
        else:
            # (e^{(ws - wx) x} - e^{-(ws + wx) x}) / (2 ws): both exponents <= 0
            out = (np.exp((self.ws - self.wx) * arr)
                   - np.exp(-(self.ws + self.wx) * arr)) / (2.0 * self.ws)
        return float(out) if np.isscalar(x) or np.asarray(x).ndim == 0 else out


def oscillator_solution(omega_n, xi, D) -> OscillatorSolution:
    """Build the solution from explicit oscillator parameters."""
    omega_n, xi, D = float(omega_n), float(xi), float(D)
    if omega_n <= 0 or D <= 0:
        raise InputError("omega_n and D must be positive")
    if xi == 1.0:
        raise DegenerateDampingError("xi is exactly 1")
    if abs(xi - 1.0) < CRITICAL_BAND:
        return OscillatorSolution(omega_n, xi, D, omega_n * xi,
                                  0.0, "critical")
    regime = "underdamped" if xi < 1.0 else "overdamped"
    ws = omega_n * math.sqrt(abs(xi * xi - 1.0))
    return OscillatorSolution(omega_n, xi, D, omega_n * xi, ws, regime)


def oscillator_for_problem(p: ProblemData) -> OscillatorSolution:
    """The canonical solution for a problem, with the rate from the contraction
    constants; uses overflow-free products in the overdamped regime."""
    rates = contraction_constants(p)
    x = p.diameter**2 * p.lipschitz * p.beta / 8.0
    if rates.xi == 1.0:
        raise DegenerateDampingError("xi is exactly 1")
    if abs(rates.xi - 1.0) < CRITICAL_BAND:
        return OscillatorSolution(rates.omega_n, rates.xi, p.diameter,
                                  rates.omega_n * rates.xi, 0.0, "critical")
    if rates.underdamped:
        ws = math.sqrt(1.0 - x * x) / p.diameter
        return OscillatorSolution(rates.omega_n, rates.xi, p.diameter,
                                  x / p.diameter, ws, "underdamped")
    ws = x * math.tanh(x) / p.diameter
    return OscillatorSolution(rates.omega_n, rates.xi, p.diameter,
                              x / p.diameter, ws, "overdamped")


def h_eval(sol: OscillatorSolution, x):
    """Function-style access to OscillatorSolution.h."""
    return sol.h(x)


def reflect_noise(w, u):
    """Householder reflection (I - 2 u u^T) w of the increment across u."""
    w = np.asarray(w, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    return w - 2.0 * u * (u @ w)


def coupled_step(body: ConvexBody, loss: StochasticLoss, x1, x2, eta, beta, z, w,
                 coupled):
    """Advance a reflection-coupled pair one step with shared (z, w).

    Chain 1 uses the increment w; chain 2 uses w reflected across
    (x1 - x2)/||x1 - x2|| until the pair is coupled, then w itself.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    coef = math.sqrt(2.0 * eta / beta)
    g1 = loss.noisy_grad(x1, z)
    g2 = loss.noisy_grad(x2, z)
    rho = x1 - x2
    nrm = float(np.linalg.norm(rho))
    if coupled or nrm == 0.0:
        w2 = w
    else:
        w2 = reflect_noise(w, rho / nrm)
    y1 = (x1 - eta * g1) + coef * w
    y2 = (x2 - eta * g2) + coef * w2
    return body.project(y1), body.project(y2)


def coupled_step_maximal(body: ConvexBody, loss: StochasticLoss, x1, x2, eta, beta,
                         z, w, u_meet, coupled):
    """One maximally-coupled step: returns (x1', x2', met).

    With probability phi(w + delta)/phi(w), delta the proposal-mean gap over
    the noise scale, chain 2's proposal is set equal to chain 1's (met=True);
    otherwise the increment is reflected as in ``coupled_step``.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    coef = math.sqrt(2.0 * eta / beta)
    g1 = loss.noisy_grad(x1, z)
    g2 = loss.noisy_grad(x2, z)
    mu1 = x1 - eta * g1
    mu2 = x2 - eta * g2
    if coupled:
        p1 = body.project(mu1 + coef * w)
        return p1, body.project(mu2 + coef * w), False
    delta = (mu1 - mu2) / coef
    log_acc = -(w @ delta + 0.5 * (delta @ delta))
    if math.log(u_meet) <= log_acc:
        p1 = body.project(mu1 + coef * w)
        return p1, p1.copy(), True
    rho = x1 - x2
    nrm = float(np.linalg.norm(rho))
    w2 = reflect_noise(w, rho / nrm) if nrm > 0 else w
    return body.project(mu1 + coef * w), body.project(mu2 + coef * w2), False


@dataclass
class CouplingRun:
    """Distances over time for a batch of coupled pairs."""

    grid: np.ndarray               # step indices where distances were recorded
    distances: np.ndarray          # (replicates, len(grid))
    coupling_steps: np.ndarray     # first merge step per replicate, -1 if never
    eta: float
    beta: float


def run_coupled_pairs(body: ConvexBody, loss: StochasticLoss, eta, beta, horizon,
                      replicates, seed, grid=None, init="uniform") -> CouplingRun:
    """Run ``replicates`` maximally-coupled pairs for ``horizon`` steps.

    Stream contract: pair i draws from the splitmix64(seed XOR i) stream, in
    blocks of up to 512 steps, ordered [x1, x2 init draws,] z-block, w-block,
    meet-uniform block.
    """
    horizon = int(horizon)
    if grid is None:
        grid = np.arange(horizon + 1)
    grid = np.asarray(sorted(set(int(g) for g in grid)))
    if grid[0] != 0:
        grid = np.concatenate([[0], grid])
    if grid[-1] > horizon:
        raise InputError("grid extends past the horizon")
    n = body.dim
    R = int(replicates)
    gens = [np.random.default_rng(chain_seed(seed, i)) for i in range(R)]
    if init == "uniform":
        X1 = np.stack([body.sample_uniform(g) for g in gens])
        X2 = np.stack([body.sample_uniform(g) for g in gens])
    else:
        X1 = np.tile(np.asarray(init[0], dtype=np.float64), (R, 1))
        X2 = np.tile(np.asarray(init[1], dtype=np.float64), (R, 1))
    coef = math.sqrt(2.0 * eta / beta)
    thresh = COUPLING_THRESHOLD * body.diameter
    coupled = np.linalg.norm(X1 - X2, axis=1) <= thresh
    X2[coupled] = X1[coupled]
    couple_step = np.where(coupled, 0, -1)

    dists = np.empty((R, len(grid)))
    gi = 0
    if grid[gi] == 0:
        dists[:, 0] = np.linalg.norm(X1 - X2, axis=1)
        gi = 1

    noise = loss.noise
    s = 0
    while s < horizon:
        nblk = min(_BLOCK, horizon - s)
        Z = np.empty((R, nblk, n))
        W = np.empty((R, nblk, n))
        U = np.empty((R, nblk))
        for c, g in enumerate(gens):
            Z[c] = noise.sample(g, nblk, n)
            W[c] = g.standard_normal((nblk, n))
            U[c] = g.uniform(size=nblk)
        for k in range(nblk):
            z, w, u = Z[:, k, :], W[:, k, :], U[:, k]
            mu1 = X1 - eta * loss.noisy_grad(X1, z)
            mu2 = X2 - eta * loss.noisy_grad(X2, z)
            delta = (mu1 - mu2) / coef
            log_acc = -(np.einsum("ij,ij->i", w, delta)
                        + 0.5 * np.einsum("ij,ij->i", delta, delta))
            meet = (~coupled) & (np.log(u) <= log_acc)
            rho = X1 - X2
            nrm = np.linalg.norm(rho, axis=1)
            safe = np.where(nrm > 0, nrm, 1.0)
            uvec = rho / safe[:, None]
            w_refl = w - 2.0 * uvec * np.einsum("ij,ij->i", uvec, w)[:, None]
            w2 = np.where(coupled[:, None] | meet[:, None] | (nrm == 0.0)[:, None],
                          w, w_refl)
            X1 = body.project(mu1 + coef * w)
            X2 = body.project(mu2 + coef * w2)
            X2[meet] = X1[meet]
            newly = (~coupled) & (meet | (np.linalg.norm(X1 - X2, axis=1) <= thresh))
            X2[newly] = X1[newly]
            couple_step[newly & (couple_step < 0)] = s + k + 1
            coupled |= newly
            if gi < len(grid) and grid[gi] == s + k + 1:
                dists[:, gi] = np.linalg.norm(X1 - X2, axis=1)
                gi += 1
        s += nblk
    return CouplingRun(grid=grid, distances=dists, coupling_steps=couple_step,
                       eta=eta, beta=beta)


@dataclass
class SupermartingaleReport:
    """Grid means of M_t = e^{eta a t} h(||rho_t||) with bootstrap CIs."""

    grid: np.ndarray
    mean_m: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    passed: bool
    failing_pairs: list
    a: float
    eta: float
    beta: float
    coupling_steps: np.ndarray
    rho_mean_initial: float
    rho_mean_final: float
    replicates: int
    alpha_bonferroni: float
    seeds: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "grid": self.grid.tolist(),
            "mean_m": self.mean_m.tolist(),
            "ci_lo": self.ci_lo.tolist(),
            "ci_hi": self.ci_hi.tolist(),
            "passed": bool(self.passed),
            "failing_pairs": self.failing_pairs,
            "a": self.a, "eta": self.eta, "beta": self.beta,
            "coupled_fraction": float(np.mean(self.coupling_steps >= 0)),
            "rho_mean_initial": self.rho_mean_initial,
            "rho_mean_final": self.rho_mean_final,
            "replicates": self.replicates,
            "alpha_bonferroni": self.alpha_bonferroni,
            "seeds": self.seeds,
        }


def geometric_grid(horizon, points=20):
    """{0} plus points-1 geometrically spaced step indices up to the horizon."""
    g = np.unique(np.round(np.geomspace(1, horizon, points - 1)).astype(int))
    return np.concatenate([[0], g])


def supermartingale_check(body: ConvexBody, loss: StochasticLoss, eta, beta,
                          a=None, replicates=2000, horizon=500, seed=0,
                          grid_points=20, resamples=1000,
                          level=0.95) -> SupermartingaleReport:
    """Test that t -> E[e^{eta a t} h(||rho_t||)] is non-increasing.

    Runs coupled pairs from uniformly dispersed initial conditions, records
    M_t on a geometric grid, and requires every ordered grid pair to satisfy
    mean(M_t2) <= mean(M_t1) within a one-sided percentile-bootstrap bound at
    Bonferroni-corrected level over all pairs.
    """
    if replicates < 100:
        raise InputError("use at least 100 replicates")
    p = problem_data(body, loss, beta, eta)
    if a is None:
        a = contraction_constants(p).a
    sol = oscillator_for_problem(p)
    grid = geometric_grid(int(horizon), grid_points)
    run = run_coupled_pairs(body, loss, eta, beta, int(horizon), replicates, seed,
                            grid=grid)
    d = np.minimum(run.distances, body.diameter)
    M = np.exp(eta * a * grid)[None, :] * sol.h(d)

    mean_m = M.mean(axis=0)
    rng = np.random.default_rng(chain_seed(seed, 1 << 32))
    boots = np.empty((resamples, len(grid)))
    R = M.shape[0]
    for i in range(resamples):
        idx = rng.integers(0, R, size=R)
        boots[i] = M[idx].mean(axis=0)
    ci_lo = np.quantile(boots, 0.025, axis=0)
    ci_hi = np.quantile(boots, 0.975, axis=0)

    npairs = len(grid) * (len(grid) - 1) // 2
    alpha = (1.0 - level) / npairs
    failing = []
    for i in range(len(grid)):
        for j in range(i + 1, len(grid)):
            diffs = boots[:, j] - boots[:, i]
            if np.quantile(diffs, alpha) > 0:
                failing.append((int(grid[i]), int(grid[j])))
    return SupermartingaleReport(
        grid=grid, mean_m=mean_m, ci_lo=ci_lo, ci_hi=ci_hi,
        passed=not failing, failing_pairs=failing, a=float(a), eta=eta, beta=beta,
        coupling_steps=run.coupling_steps,
        rho_mean_initial=float(run.distances[:, 0].mean()),
        rho_mean_final=float(run.distances[:, -1].mean()),
        replicates=int(replicates), alpha_bonferroni=alpha,
        seeds={"master": int(seed)},
    )
