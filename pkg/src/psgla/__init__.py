"""Projected stochastic gradient Langevin sampling over compact convex sets.

Modules:
    geometry   convex bodies (ball, box, polytope): projection, gauge, support
    oracle     stochastic losses with gradient oracles and declared constants
    sampler    the projected Langevin chain and reflected-SDE simulators
    coupling   reflection coupling and the oscillator distance function
    constants  closed-form convergence constants and the (beta, T, eta) tuner
    metrics    Gibbs ground truth, empirical W1, suboptimality, rate fits
    cli        the batch experiment runner (``psgla`` entry point)
"""

__version__ = "0.1.0"

from .constants import (ProblemData, TheoryConstants, composite_constants,
                        contraction_constants, problem_data, suboptimality_bound,
                        suboptimality_constant, tune_parameters, wasserstein_bound)
from .coupling import (OscillatorSolution, coupled_step, h_eval,
                       oscillator_for_problem, oscillator_solution,
                       supermartingale_check)
from .geometry import Ball, Box, ConvexBody, Polytope, body_from_dict
from .metrics import (gibbs_rejection_sample, rate_fit, suboptimality_estimate,
                      w1_exact_1d, w1_sliced)
from .oracle import (AdditiveBoundedUniform, AdditiveGaussian, DataDriven,
                     DoubleWell, LinearLoss, NoiseModel, QuadraticBowl,
                     StochasticLoss, TrigSum, estimate_constants, loss_from_dict)
from .sampler import (SamplerConfig, Trajectory, chain_seed, eta_schedule,
                      euler_reflected, psgla_step, run_chain, run_ensemble,
                      run_mean_process, run_noisy_process, skorokhod_piecewise)

__all__ = [
    "__version__",
    "Ball", "Box", "ConvexBody", "Polytope", "body_from_dict",
    "NoiseModel", "AdditiveGaussian", "AdditiveBoundedUniform", "DataDriven",
    "StochasticLoss", "QuadraticBowl", "DoubleWell", "TrigSum", "LinearLoss",
    "loss_from_dict", "estimate_constants",
    "SamplerConfig", "Trajectory", "psgla_step", "run_chain", "run_ensemble",
    "run_mean_process", "run_noisy_process", "euler_reflected",
    "skorokhod_piecewise", "eta_schedule", "chain_seed",
    "OscillatorSolution", "oscillator_solution", "oscillator_for_problem",
    "h_eval", "coupled_step", "supermartingale_check",
    "ProblemData", "TheoryConstants", "problem_data", "contraction_constants",
    "composite_constants", "wasserstein_bound", "suboptimality_constant",
    "suboptimality_bound", "tune_parameters",
    "gibbs_rejection_sample", "w1_exact_1d", "w1_sliced",
    "suboptimality_estimate", "rate_fit",
]
