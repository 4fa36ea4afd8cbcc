"""Closed-form evaluation of every convergence constant, plus the parameter tuner.

Everything here is a pure function of the problem data (n, D, r, l, u, sigma,
beta). The contraction rate has two regimes:

    D^2 l beta < 8   (underdamped):  a = 4 / (D^2 beta)
    otherwise        (overdamped):   a = (D^2 l^2 beta / 16) sech^2(D^2 l beta / 8)

and the W1 prefactor is 1/h'(D) for the oscillator distance function h (see
``coupling``). Exponentials are evaluated through log-space identities so the
outputs stay meaningful far beyond float overflow (every overflow-prone field
carries a log10 companion).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import InputError
from .geometry import ConvexBody
from .oracle import StochasticLoss

LOG4 = math.log(4.0)
_LN10 = math.log(10.0)


@dataclass(frozen=True)
class ProblemData:
    """The scalar problem description every constant is computed from."""

    n: int
    diameter: float
    inradius: float
    lipschitz: float
    grad_bound: float
    subgauss: float
    beta: float
    eta: Optional[float] = None

    def __post_init__(self):
        if self.n < 1:
            raise InputError("dimension must be >= 1")
        if self.diameter <= 0 or self.inradius <= 0 or self.beta <= 0:
            raise InputError("diameter, inradius and beta must be positive")
        if self.lipschitz < 0 or self.grad_bound < 0 or self.subgauss < 0:
            raise InputError("lipschitz, grad_bound and subgauss must be nonnegative")
        if self.inradius > self.diameter + 1e-12:
            raise InputError("inradius cannot exceed the diameter")
        if self.eta is not None and self.eta <= 0:
            raise InputError("eta must be positive when given")

    def to_dict(self):
        return {"n": self.n, "diameter": self.diameter, "inradius": self.inradius,
                "lipschitz": self.lipschitz, "grad_bound": self.grad_bound,
                "subgauss": self.subgauss, "beta": self.beta, "eta": self.eta}


def problem_data(body: ConvexBody, loss: StochasticLoss, beta, eta=None) -> ProblemData:
    """Assemble ProblemData from a body and a loss with declared constants."""
    return ProblemData(n=body.dim, diameter=body.diameter, inradius=body.inradius,
                       lipschitz=loss.lipschitz(body), grad_bound=loss.grad_bound(body),
                       subgauss=loss.subgauss(), beta=float(beta),
                       eta=None if eta is None else float(eta))


@dataclass(frozen=True)
class ContractionRates:
    """Decay rate and oscillator parameters for one problem instance."""

    a: float
    log_a: float            # natural log; exact even when a underflows
    omega_n: float
    xi: float
    w1_prefactor: float     # 1/h'(D)
    log_w1_prefactor: float
    underdamped: bool


def contraction_constants(p: ProblemData) -> ContractionRates:
    """Rate a, oscillator parameters (omega_N, xi) and the W1 prefactor.

    Underdamped branch (D^2 l beta < 8):
        a = 4/(D^2 beta),  prefactor = e^{D w xi} / (cos(D w s) - (xi/s) sin(D w s)),
        s = sqrt(1 - xi^2).
    Overdamped branch: with x = D^2 l beta / 8,
        a = (l x / 2) sech^2(x),  prefactor = e^x sinh(x) / sinh(2x / (1 + e^{2x})),
    which is the all-hyperbolic closed form of 1/h'(D) rewritten without
    cancellation (sinh(x - y) = cosh x cosh y (tanh x - tanh y), y = x tanh x).
    """
    D, lip, beta = p.diameter, p.lipschitz, p.beta
    x = D * D * lip * beta / 8.0
    if x < 1.0:
        a = 4.0 / (D * D * beta)
        omega = math.sqrt(a * beta) / 2.0
        xi = (D * lip / 4.0) * math.sqrt(beta / a)
        s = math.sqrt(1.0 - xi * xi)
        y = D * omega * s
        sinc = math.sin(y) / y if y > 0 else 1.0
        denom = math.cos(y) - xi * D * omega * sinc
        log_c = D * omega * xi - math.log(denom)
        return ContractionRates(a=a, log_a=math.log(a), omega_n=omega, xi=xi,
                                w1_prefactor=math.exp(log_c), log_w1_prefactor=log_c,
                                underdamped=True)
    # overdamped: log(sech^2 x) = 2 (log 2 - x - log1p(e^{-2x}))
    log_sech2 = 2.0 * (math.log(2.0) - x - math.log1p(math.exp(-2.0 * x)))
    log_a = math.log(D * D * lip * lip * beta / 16.0) + log_sech2
    a = math.exp(log_a) if log_a > -745 else 0.0
    omega = math.exp(0.5 * (log_a + math.log(beta))) / 2.0
    xi = math.cosh(x) if x < 710 else math.inf
    arg = 2.0 * x * math.exp(-2.0 * x) / (1.0 + math.exp(-2.0 * x))
    log_numer = math.log(math.expm1(2.0 * x)) - math.log(2.0) if x < 350 \
        else 2.0 * x - math.log(2.0)
    log_c = log_numer - math.log(math.sinh(arg))
    c = math.exp(log_c) if log_c < 709 else math.inf
    return ContractionRates(a=a, log_a=log_a, omega_n=omega, xi=xi,
                            w1_prefactor=c, log_w1_prefactor=log_c, underdamped=False)


def discretization_constants(p: ProblemData):
    """Coefficients (sqrt-term, constant-term) of the chain-vs-continuous gap."""
    n, D, r, lip, u, sig, beta = (p.n, p.diameter, p.inradius, p.lipschitz,
                                  p.grad_bound, p.subgauss, p.beta)
    A = (u + lip * D) / (2.0 * r) + n * sig / (math.sqrt(2.0) * r) \
        + 2.0 * n * math.sqrt(2.0) / (r * math.sqrt(beta))
    B = n / beta + D * u + 2.0 * D * n * sig
    c_sqrt = math.sqrt(2.0 * A * B)
    c_const = math.sqrt(2.0 * (D * u + 2.0 * n * sig + n / beta)) + D * math.sqrt(A)
    return c_sqrt, c_const


def averaging_constants(p: ProblemData):
    """Coefficients of the noise-averaging gap; all vanish when sigma = 0."""
    n, D, r, sig, beta = p.n, p.diameter, p.inradius, p.subgauss, p.beta
    u = p.grad_bound
    root2pi = math.sqrt(2.0 * math.pi)
    c_lin = 2.0 * sig * math.sqrt(n)
    c_root = math.sqrt(64.0 * n * sig * D * root2pi / p.inradius)
    c_tq = math.sqrt(128.0 * n * sig * root2pi / r * (n / beta + D * u + 2.0 * D * n * sig))
    return c_lin, c_root, c_tq


@dataclass(frozen=True)
class TheoryConstants:
    """Every constant of the convergence bound for one problem instance.

    ``contract_coef`` multiplies e^{-eta a k} and ``rough_coef`` multiplies
    (eta log k)^{1/4}; by construction contract_coef = w1_prefactor * D and
    rough_coef = disc_total + ave_total. Values may overflow to inf; the
    log10 fields never do.
    """

    a: float
    omega_n: float
    xi: float
    underdamped: bool
    w1_prefactor: float
    disc_sqrt: float
    disc_const: float
    ave_lin: float
    ave_root: float
    ave_tq: float
    disc_total: float
    ave_total: float
    contract_coef: float
    rough_coef: float
    suboptimality_log_const: float
    log10_a: float
    log10_w1_prefactor: float
    log10_contract_coef: float
    log10_rough_coef: float

    def to_dict(self):
        def clean(v):
            return v if math.isfinite(v) else None
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        return {k: (clean(v) if isinstance(v, float) else v) for k, v in d.items()}


def suboptimality_constant(p: ProblemData) -> float:
    """2 D max{2/r, (r + sqrt(r^2 + D^2)) u / (r log 2)}."""
    D, r, u = p.diameter, p.inradius, p.grad_bound
    return 2.0 * D * max(2.0 / r, (r + math.sqrt(r * r + D * D)) * u / (r * math.log(2.0)))


def _log_switch_factor(rates: ContractionRates):
    """log(1 + prefactor / (1 - e^{-a/2})), stable for tiny a and huge prefactor."""
    if rates.a > 1e-300:
        log_denom = math.log(-math.expm1(-rates.a / 2.0))
    else:
        log_denom = rates.log_a - math.log(2.0)  # 1 - e^{-a/2} ~ a/2
    ratio_log = rates.log_w1_prefactor - log_denom
    if ratio_log > 36:   # 1 is negligible at double precision
        return ratio_log
    return math.log1p(math.exp(ratio_log))


def composite_constants(p: ProblemData) -> TheoryConstants:
    """Collect all constants for the two-term Wasserstein bound."""
    rates = contraction_constants(p)
    c_sqrt, c_const = discretization_constants(p)
    c_lin, c_root, c_tq = averaging_constants(p)
    log_switch = _log_switch_factor(rates)
    log_disc = math.log(2.0 ** 0.25 * (c_sqrt + c_const)) + p.lipschitz + log_switch
    ave_sum = c_lin + c_root + c_tq
    log_ave = (math.log(ave_sum) + p.lipschitz + log_switch) if ave_sum > 0 else -math.inf
    log_rough = np.logaddexp(log_disc, log_ave)
    log_contract = rates.log_w1_prefactor + math.log(p.diameter)

    def safe_exp(lv):
        return math.exp(lv) if lv < 709 else math.inf

    return TheoryConstants(
        a=rates.a, omega_n=rates.omega_n, xi=rates.xi, underdamped=rates.underdamped,
        w1_prefactor=rates.w1_prefactor,
        disc_sqrt=c_sqrt, disc_const=c_const,
        ave_lin=c_lin, ave_root=c_root, ave_tq=c_tq,
        disc_total=safe_exp(log_disc), ave_total=safe_exp(log_ave) if ave_sum > 0 else 0.0,
        contract_coef=safe_exp(log_contract), rough_coef=safe_exp(float(log_rough)),
        suboptimality_log_const=suboptimality_constant(p),
        log10_a=rates.log_a / _LN10,
        log10_w1_prefactor=rates.log_w1_prefactor / _LN10,
        log10_contract_coef=log_contract / _LN10,
        log10_rough_coef=float(log_rough) / _LN10,
    )


def wasserstein_bound(tc: TheoryConstants, eta, a, k):
    """Two-term bound: contract_coef e^{-eta a k} + rough_coef (eta log k)^{1/4}."""
    k = int(k)
    if k < 4:
        raise InputError("the bound holds for k >= 4")
    if eta > 0.5:
        warnings.warn("the bound assumes eta <= 1/2", stacklevel=2)
    return tc.contract_coef * math.exp(-eta * a * k) \
        + tc.rough_coef * (eta * math.log(k)) ** 0.25


def suboptimality_bound(p: ProblemData, tc: TheoryConstants, w1):
    """Excess mean loss above the minimum: u w1 + n log(c max{1, beta}) / beta."""
    if w1 < 0:
        raise InputError("w1 must be nonnegative")
    c = tc.suboptimality_log_const
    return p.grad_bound * w1 + p.n * math.log(c * max(1.0, p.beta)) / p.beta


@dataclass(frozen=True)
class TuneResult:
    """Chosen (beta, T, eta) plus the predicted bound decomposition.

    T and eta may exceed float range / underflow; log10_T and log10_eta are
    always finite and authoritative.
    """

    beta: float
    T: float
    T_int: Optional[int]
    eta: float
    log10_T: float
    log10_eta: float
    a: float
    log10_a: float
    eta_capped: bool
    predicted_w1_bound: float
    log10_predicted_w1_bound: float
    predicted_log_term: float
    predicted_total: float
    rho: float
    zeta: float
    lam: float
    delta: float

    def to_dict(self):
        def clean(v):
            return v if not isinstance(v, float) or math.isfinite(v) else None
        return {k: clean(getattr(self, k)) for k in self.__dataclass_fields__}


def tune_parameters(p: ProblemData, epsilon, lam=0.5, delta=0.1,
                    rho=None, zeta=None) -> TuneResult:
    """Choose (beta, T, eta) so the predicted suboptimality is at most epsilon.

    beta is the smallest value (>= 1) making the Gibbs log term at most
    epsilon/2:
        beta >= (1/c) (2 n c / ((1 - lam) e epsilon))^{1/lam},
    c the suboptimality log constant. T then makes u times the Wasserstein
    bound at the optimal step size at most epsilon/2, via
    T^{-1/4} (log T)^{1/2} <= sqrt(T^{delta - 1/2} / (e delta)):
        T >= [e delta (epsilon / (2 u C))^2]^{-2/(1-2delta)},
    with C = contract_coef + rough_coef/(4a)^{1/4} evaluated at the chosen
    beta. eta is the schedule value log(T)/(4 a T) capped at 1/2.

    rho > 4 and zeta > 1 are the alternative parametrization
    (rho = 4/(1-2 delta), zeta = 1/lam) and override delta / lam when given.
    """
    if epsilon <= 0:
        raise InputError("epsilon must be positive")
    if rho is not None:
        if rho <= 4:
            raise InputError("rho must exceed 4")
        delta = 0.5 * (1.0 - 4.0 / rho)
    if zeta is not None:
        if zeta <= 1:
            raise InputError("zeta must exceed 1")
        lam = 1.0 / zeta
    if not 0 < lam < 1:
        raise InputError("lambda must lie in (0, 1)")
    if not 0 < delta < 0.5:
        raise InputError("delta must lie in (0, 1/2)")

    c = suboptimality_constant(p)
    beta_req = (1.0 / c) * (2.0 * p.n * c / ((1.0 - lam) * math.e * epsilon)) ** (1.0 / lam)
    beta = max(1.0, beta_req)

    p_at_beta = replace(p, beta=beta, eta=None)
    tc = composite_constants(p_at_beta)
    rates = contraction_constants(p_at_beta)
    log_a = rates.log_a
    # log C = logaddexp(log contract, log rough - (log 4 + log a)/4)
    log_C = float(np.logaddexp(tc.log10_contract_coef * _LN10,
                               tc.log10_rough_coef * _LN10 - 0.25 * (LOG4 + log_a)))

    u = p.grad_bound
    if u == 0.0:
        log_T = LOG4
    else:
        inner = 1.0 + math.log(delta) + 2.0 * (math.log(epsilon) - math.log(2.0 * u) - log_C)
        log_T = max(LOG4, -2.0 / (1.0 - 2.0 * delta) * inner)
    T = math.exp(log_T) if log_T < 709 else math.inf
    T_int = None
    if math.isfinite(T) and T < 2**62:
        T_int = max(4, math.ceil(T - 1e-9))
        T = float(T_int)
        log_T = math.log(T)

    log_eta = math.log(log_T) - LOG4 - log_a - log_T
    eta_capped = log_eta > math.log(0.5)
    eta = 0.5 if eta_capped else (math.exp(log_eta) if log_eta > -745 else 0.0)
    if eta_capped:
        log_eta = math.log(0.5)

    # predicted bound at (beta, T, eta)
    eta_aT = eta * rates.a * T if math.isfinite(T) else math.inf
    if not eta_capped:
        eta_aT = log_T / 4.0  # exact for the schedule value
    log_term1 = tc.log10_contract_coef * _LN10 - eta_aT
    log_term2 = tc.log10_rough_coef * _LN10 + 0.25 * (log_eta + math.log(log_T))
    log_w1 = float(np.logaddexp(log_term1, log_term2))
    pred_w1 = math.exp(log_w1) if log_w1 < 709 else math.inf
    log_gibbs_term = p.n * math.log(c * max(1.0, beta)) / beta

    return TuneResult(
        beta=beta, T=T, T_int=T_int, eta=eta,
        log10_T=log_T / _LN10, log10_eta=log_eta / _LN10,
        a=rates.a, log10_a=log_a / _LN10, eta_capped=eta_capped,
        predicted_w1_bound=pred_w1, log10_predicted_w1_bound=log_w1 / _LN10,
        predicted_log_term=log_gibbs_term,
        predicted_total=u * pred_w1 + log_gibbs_term,
        rho=4.0 / (1.0 - 2.0 * delta), zeta=1.0 / lam, lam=lam, delta=delta,
    )
