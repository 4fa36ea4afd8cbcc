"""Projected Langevin chains and reflected-SDE simulation.

The discrete chain is

    x_{k+1} = proj_K( x_k - eta * grad f(x_k, z_k) + sqrt(2 eta / beta) w_k )

with w_k standard normal. ``euler_reflected`` runs the same update with m
substeps per unit time (time step 1/m, Brownian increments N(0, I/m)), which
simulates the continuous reflected dynamics; at m = 1 the two coincide step
for step.

Randomness contract (what makes runs reproducible and chain-count stable):
chain i draws from ``default_rng(splitmix64(master_seed XOR i))``. Each chain
consumes its stream in fixed blocks of up to 512 time units: first the z draws
for the block's units, then the Brownian increments for the block's substeps.
Uniform initialization, when requested, draws from the chain's stream before
any block. Chain i's trajectory therefore never depends on how many chains
run alongside it, or on which backend executes the arithmetic.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .errors import InputError, NumericError
from .geometry import ConvexBody
from .oracle import StochasticLoss

BLOCK_UNITS = 512

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer; the documented per-chain seed mixing function."""
    x &= _MASK64
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def chain_seed(master_seed: int, chain_index: int) -> int:
    """Seed of chain ``chain_index``: splitmix64(master XOR index)."""
    return splitmix64((int(master_seed) ^ int(chain_index)) & _MASK64)


def _chain_generators(master_seed, chains):
    return [np.random.default_rng(chain_seed(master_seed, i)) for i in range(chains)]


@dataclass
class SamplerConfig:
    """Run parameters for a chain or ensemble."""

    eta: float
    beta: float
    horizon: int
    seed: int = 0
    substeps: int = 1
    chains: int = 1
    x0: str = "origin"           # "origin" or "uniform"
    record_stride: Optional[int] = None

    def __post_init__(self):
        if self.eta <= 0 or self.beta <= 0:
            raise InputError("eta and beta must be positive")
        if self.horizon < 0:
            raise InputError("horizon must be nonnegative")
        if self.substeps < 1 or self.chains < 1:
            raise InputError("substeps and chains must be >= 1")
        if self.x0 not in ("origin", "uniform"):
            raise InputError("x0 must be 'origin' or 'uniform'")
        if self.eta > 0.5:
            warnings.warn(
                f"eta={self.eta} exceeds 1/2; theory-comparison bounds assume eta <= 1/2",
                stacklevel=2,
            )

    def resolved_stride(self):
        if self.record_stride is not None:
            return max(1, int(self.record_stride))
        return max(1, self.horizon // 1000)


@dataclass
class Trajectory:
    """Recorded states of one chain.

    ``reflections[i]`` is the displacement contributed by the projection on
    the step ending at ``times[i]`` (zero when the pre-projection point was
    already feasible, and zero at time 0).
    """

    times: np.ndarray
    states: np.ndarray
    reflections: np.ndarray
    zs: Optional[np.ndarray] = None

    def to_csv(self, path):
        n = self.states.shape[1]
        header = ["time"] + [f"x_{j+1}" for j in range(n)] + [f"refl_{j+1}" for j in range(n)]
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for i in range(len(self.times)):
                row = [f"{self.times[i]:.17g}"]
                row += [f"{v:.17g}" for v in self.states[i]]
                row += [f"{v:.17g}" for v in self.reflections[i]]
                fh.write(",".join(row) + "\n")


def eta_schedule(T, a):
    """Step size log(T) / (4 a T), capped at 1/2 with a warning.

    Requires an integer horizon T >= 4 and a decay rate a > 0.
    """
    T = int(T)
    if T < 4:
        raise InputError("eta_schedule requires T >= 4")
    if a <= 0:
        raise InputError("eta_schedule requires a > 0")
    eta = math.log(T) / (4.0 * a * T)
    if eta > 0.5:
        warnings.warn(
            f"eta schedule gives {eta:.4g} > 1/2 at T={T}; capping at 1/2", stacklevel=2
        )
        return 0.5
    return eta


def psgla_step(body: ConvexBody, loss: StochasticLoss, x, eta, beta, z, w):
    """One projected Langevin update from a feasible point.

    Exact formula: proj( x - eta * grad f(x, z) + sqrt(2 eta / beta) * w ).
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    g = loss.noisy_grad(x, z)
    y = (x - eta * g) + math.sqrt(2.0 * eta / beta) * w
    if not np.all(np.isfinite(y)):
        raise NumericError(f"non-finite update at x={x.tolist()}")
    return body.project(y)


# ---------------------------------------------------------------------------
# blocked driver shared by the discrete chain and the fine-step simulators
# ---------------------------------------------------------------------------

def _initial_states(body, mode, gens):
    n = body.dim
    if mode == "uniform":
        return np.stack([body.sample_uniform(g) for g in gens])
    return np.zeros((len(gens), n))


def _drive(body, loss, X, gens, eta, beta, substeps, m, use_z, record_steps=None,
           record_z=False):
    """Advance all chains ``substeps`` substeps of size 1/m.

    Returns (X, records) where records is a list of
    (substep_index, states_copy, last_step_displacements, z_row_or_None).
    """
    n = body.dim
    chains = len(gens)
    dt = 1.0 / m
    coef = math.sqrt(2.0 * eta / beta)
    sdt = math.sqrt(dt)
    # without z draws the kernels must add the data-driven mean offset themselves
    gshift = np.zeros(n) if use_z else loss.mean_shift
    records = []
    rec = sorted(record_steps) if record_steps else []
    ri = 0
    units_total = -(-substeps // m)
    upb = max(1, BLOCK_UNITS // m)
    u_done = 0
    noise = loss.noise
    while u_done < units_total:
        units_this = min(upb, units_total - u_done)
        sub_start = u_done * m
        sub_end = min(substeps, (u_done + units_this) * m)
        nsub = sub_end - sub_start
        Z = np.empty((chains, units_this if use_z else 0, n))
        W = np.empty((chains, nsub, n))
        for c, g in enumerate(gens):
            if use_z:
                Z[c] = noise.sample(g, units_this, n)
            W[c] = g.standard_normal((nsub, n))
        if m > 1:
            W *= sdt
        a = 0
        while a < nsub:
            b = nsub
            while ri < len(rec) and rec[ri] <= sub_start + a:
                ri += 1  # defensive; record points are strictly increasing
            if ri < len(rec) and rec[ri] - sub_start <= nsub:
                b = rec[ri] - sub_start
            X, R = _kernels.advance_block(X, body, loss, gshift, Z, W[:, a:b, :],
                                          eta * dt, coef, m, a)
            if ri < len(rec) and rec[ri] == sub_start + b:
                zrow = Z[:, (b - 1) // m, :].copy() if (record_z and use_z) else None
                records.append((sub_start + b, X.copy(), R.copy(), zrow))
                ri += 1
            a = b
        u_done += units_this
    return X, records


def run_chain(body: ConvexBody, loss: StochasticLoss, config: SamplerConfig,
              record_z=False) -> Trajectory:
    """Iterate the projected Langevin update for ``config.horizon`` steps.

    Records every ``record_stride``-th state (plus the initial and final
    states); deterministic given the seed, and identical to chain 0 of
    ``run_ensemble`` with the same master seed.
    """
    T = int(config.horizon)
    gens = _chain_generators(config.seed, 1)
    X = _initial_states(body, config.x0, gens)
    init = X[0].copy()
    stride = config.resolved_stride()
    rec = sorted(set(range(stride, T + 1, stride)) | {T}) if T > 0 else []
    _, records = _drive(body, loss, X, gens, config.eta, config.beta,
                        T, 1, True, record_steps=rec, record_z=record_z)
    n = body.dim
    times = np.array([0.0] + [float(r[0]) for r in records])
    states = np.vstack([init[None, :]] + [r[1][0][None, :] for r in records])
    refl = np.vstack([np.zeros((1, n))] + [r[2][0][None, :] for r in records])
    zs = None
    if record_z:
        zs = np.vstack([np.zeros((1, n))] +
                       [(r[3][0][None, :] if r[3] is not None else np.zeros((1, n)))
                        for r in records])
    return Trajectory(times=times, states=states, reflections=refl, zs=zs)


def _ensemble_range(body, loss, config, lo, hi):
    gens = [np.random.default_rng(chain_seed(config.seed, i)) for i in range(lo, hi)]
    X = _initial_states(body, config.x0, gens)
    X, _ = _drive(body, loss, X, gens, config.eta, config.beta,
                  int(config.horizon), 1, True)
    return X


def run_ensemble(body: ConvexBody, loss: StochasticLoss, config: SamplerConfig,
                 threads=1):
    """Terminal states of ``config.chains`` independent chains, shape (chains, n).

    ``threads`` only splits the chain range across workers; per-chain streams
    make the result identical for every thread count.
    """
    chains = config.chains
    threads = max(1, min(int(threads), chains))
    if threads == 1:
        return _ensemble_range(body, loss, config, 0, chains)
    from concurrent.futures import ThreadPoolExecutor
    bounds = np.linspace(0, chains, threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(
            lambda k: _ensemble_range(body, loss, config, bounds[k], bounds[k + 1]),
            range(threads),
        ))
    return np.vstack(parts)


def run_mean_process(body, loss, eta, beta, horizon, m, seed, chains=1, x0="origin"):
    """Fine-step simulation of the averaged reflected dynamics (drift -eta grad fbar).

    Returns the terminal states, shape (chains, n).
    """
    gens = _chain_generators(seed, chains)
    X = _initial_states(body, x0, gens) if isinstance(x0, str) else np.array(x0, dtype=np.float64)
    substeps = int(round(horizon * m))
    X, _ = _drive(body, loss, X, gens, eta, beta, substeps, int(m), False)
    return X


def run_noisy_process(body, loss, eta, beta, horizon, m, seed, chains=1, x0="origin"):
    """Fine-step simulation of the noisy reflected dynamics.

    The drift is -eta grad f(x, z_floor(t)): z refreshes at integer times
    regardless of m. At m = 1 this reproduces ``run_ensemble`` exactly.
    """
    gens = _chain_generators(seed, chains)
    X = _initial_states(body, x0, gens) if isinstance(x0, str) else np.array(x0, dtype=np.float64)
    substeps = int(round(horizon * m))
    X, _ = _drive(body, loss, X, gens, eta, beta, substeps, int(m), True)
    return X


def euler_reflected(body: ConvexBody, drift: Callable, eta, beta, horizon, m, seed,
                    chains=1, x0=None, record_stride=None):
    """Projected Euler scheme for a reflected SDE with an arbitrary drift.

    Iterates x <- proj(x + (1/m) drift(t, x) + sqrt(2 eta / beta) dW) with
    dW ~ N(0, I/m); ``drift`` receives the current time and the (chains, n)
    state batch and must return the full drift (any eta factor included).

    Returns a Trajectory when chains == 1, else the (chains, n) terminal
    batch (record_stride must then be None).
    """
    if m < 1:
        raise InputError("m must be >= 1")
    m = int(m)
    n = body.dim
    gens = _chain_generators(seed, chains)
    if x0 is None:
        X = np.zeros((chains, n))
    else:
        X = np.tile(np.asarray(x0, dtype=np.float64), (chains, 1)) \
            if np.asarray(x0).ndim == 1 else np.array(x0, dtype=np.float64)
    if not np.all(body.contains(X)):
        raise InputError("initial state is not inside the body")
    substeps = int(round(horizon * m))
    dt = 1.0 / m
    coef = math.sqrt(2.0 * eta / beta)
    sdt = math.sqrt(dt)
    if record_stride is not None and chains != 1:
        raise InputError("trajectory recording requires chains == 1")
    record = chains == 1
    stride = max(1, int(record_stride)) if record_stride is not None else max(1, substeps)
    times, states, refl = [0.0], [X[0].copy()], [np.zeros(n)]
    upb = max(1, BLOCK_UNITS // m)
    s = 0
    while s < substeps:
        nsub = min(upb * m, substeps - s)
        W = np.empty((chains, nsub, n))
        for c, g in enumerate(gens):
            W[c] = g.standard_normal((nsub, n))
        if m > 1:
            W *= sdt
        for k in range(nsub):
            t = (s + k) * dt
            D = np.asarray(drift(t, X), dtype=np.float64)
            if not np.all(np.isfinite(D)):
                raise NumericError(f"non-finite drift at t={t}")
            Y = (X + dt * D) + coef * W[:, k, :]
            Xn = body.project(Y)
            if record and ((s + k + 1) % stride == 0 or s + k + 1 == substeps):
                times.append((s + k + 1) * dt)
                states.append(Xn[0].copy())
                refl.append((Xn - Y)[0].copy())
            X = Xn
        s += nsub
    if chains == 1:
        return Trajectory(times=np.array(times), states=np.vstack(states),
                          reflections=np.vstack(refl))
    return X


@dataclass
class SkorokhodSolution:
    """Exact constrained path for a piecewise-constant input.

    ``magnitudes[k]`` and ``directions[k]`` are the reflection increment d_k
    and its unit direction v_k at jump k (zero vector when no reflection);
    ``displacements`` = -d_k v_k matches the Trajectory convention.
    """

    times: np.ndarray
    states: np.ndarray
    magnitudes: np.ndarray
    directions: np.ndarray

    @property
    def displacements(self):
        return -self.magnitudes[:, None] * self.directions


def skorokhod_piecewise(body: ConvexBody, times, values) -> SkorokhodSolution:
    """Solve the Skorokhod problem for a piecewise-constant input path.

    ``values[i]`` is the input on [times[i], times[i+1]); the solution jumps
    by the projected increments:
        x_{k+1} = proj(x_k + w_{k+1} - w_k).
    """
    times = np.asarray(times, dtype=np.float64)
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    if values.shape[0] != times.shape[0]:
        raise InputError("times and values must have matching length")
    if values.shape[1] != body.dim:
        raise InputError("input path has wrong dimension")
    if not body.contains(values[0]):
        raise InputError("initial input point must lie inside the body")
    k = times.shape[0]
    states = np.empty_like(values)
    mags = np.zeros(k)
    dirs = np.zeros_like(values)
    states[0] = values[0]
    for i in range(1, k):
        pre = states[i - 1] + values[i] - values[i - 1]
        post = body.project(pre)
        states[i] = post
        if not body.contains(pre, 0.0):
            d = float(np.linalg.norm(pre - post))
            mags[i] = d
            if d > 0:
                dirs[i] = (pre - post) / d
    return SkorokhodSolution(times=times, states=states, magnitudes=mags, directions=dirs)
