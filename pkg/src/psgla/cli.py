"""Batch experiment runner.

Subcommands: sample | converge | couple | constants | tune. Every command
reads one JSON config (--config), writes into an output directory (--out or
the config's ``out``), and embeds the resolved config plus all derived seeds
in ``manifest.json``. Re-running a manifest reproduces every numeric output
byte for byte (the manifest itself differs only in its wall_time field).

Exit codes: 0 success, 2 config error, 3 numeric error, 4 statistical pass
criteria unmet (couple / converge).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import backend_name
from .config import ExperimentConfig
from .constants import (contraction_constants, composite_constants, problem_data,
                        tune_parameters, wasserstein_bound)
from .coupling import supermartingale_check
from .errors import InputError, NumericError, PsglaError
from .geometry import body_from_dict
from .metrics import (EmpiricalReport, gibbs_rejection_sample, rate_fit,
                      w1_bootstrap_ci, w1_exact_1d)
from .oracle import loss_from_dict
from .sampler import SamplerConfig, chain_seed, eta_schedule, run_ensemble

# sub-seed labels: component streams are chain_seed(master, label)
SEED_GIBBS = 1 << 40
SEED_CHECKPOINT = (1 << 40) + 1000   # + checkpoint index
SEED_MATCH = (1 << 40) + 1
SEED_BOOT = (1 << 40) + 2


def _fmt(v):
    return f"{v:.17g}"


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v)
                             for v in row) + "\n")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_problem(cfg: ExperimentConfig):
    body = body_from_dict(cfg.body)
    loss = loss_from_dict(cfg.loss)
    if loss.dim != body.dim:
        raise InputError(f"loss dimension {loss.dim} != body dimension {body.dim}")
    return body, loss


def _resolve_beta(cfg, body, loss):
    beta = cfg.sampler["beta"]
    if beta != "auto":
        return float(beta), None
    p = problem_data(body, loss, 1.0)
    tr = tune_parameters(p, cfg.experiment["epsilon"], lam=cfg.experiment["lambda"],
                         delta=cfg.experiment["delta"], rho=cfg.experiment["rho"],
                         zeta=cfg.experiment["zeta"])
    return tr.beta, tr


def _resolve_eta(cfg, p, T):
    """eta from the config, or the optimal schedule log(T)/(4 a T)."""
    eta = cfg.sampler["eta"]
    if eta != "auto":
        return float(eta), None
    rates = contraction_constants(p)
    return eta_schedule(T, rates.a), rates.a


def _schedule_rate(p, t_min):
    """Rate used inside the step-size schedule for rate studies.

    The theory rate is kept whenever it yields an informative (uncapped)
    schedule at the smallest checkpoint; otherwise the fast-regime rate
    4/(D^2 beta) is substituted so the study actually varies eta, and both
    rates are recorded.
    """
    rates = contraction_constants(p)
    a_theory = rates.a
    if a_theory > 0 and math.log(t_min) / (4.0 * a_theory * t_min) <= 0.5:
        return a_theory, a_theory, False
    a_fast = 4.0 / (p.diameter**2 * p.beta)
    warnings.warn(
        "theory contraction rate saturates the eta <= 1/2 cap at every "
        "checkpoint; scheduling steps with the fast-regime rate instead",
        stacklevel=2,
    )
    return a_fast, a_theory, True


def _manifest(cfg, out_dir, extra, t0):
    man = {
        "config": cfg.to_dict(),
        "version": __version__,
        "backend": backend_name(),
        "wall_time_s": time.monotonic() - t0,
    }
    man.update(extra)
    _write_json(out_dir / "manifest.json", man)


def cmd_sample(cfg: ExperimentConfig, out_dir: Path, threads):
    t0 = time.monotonic()
    body, loss = _resolve_problem(cfg)
    beta, _ = _resolve_beta(cfg, body, loss)
    T = cfg.sampler["T"]
    p = problem_data(body, loss, beta)
    eta, a = _resolve_eta(cfg, p, max(T, 4))
    sc = SamplerConfig(eta=eta, beta=beta, horizon=T, seed=cfg.sampler["seed"],
                       chains=cfg.sampler["chains"], x0=cfg.sampler["x0"],
                       record_stride=cfg.sampler["record_stride"])
    X = run_ensemble(body, loss, sc, threads=threads)
    _write_csv(out_dir / "terminal.csv",
               ["chain"] + [f"x_{j+1}" for j in range(body.dim)],
               ((i, *map(float, X[i])) for i in range(len(X))))
    _manifest(cfg, out_dir, {
        "resolved": {"eta": eta, "beta": beta, "T": T, "a": a,
                     "chains": sc.chains, "master_seed": sc.seed},
    }, t0)
    return 0


def cmd_converge(cfg: ExperimentConfig, out_dir: Path, threads):
    t0 = time.monotonic()
    body, loss = _resolve_problem(cfg)
    if body.dim > 2:
        raise InputError("converge studies require a 1-d or 2-d problem")
    beta, _ = _resolve_beta(cfg, body, loss)
    cps = cfg.experiment["checkpoints"]
    if not cps:
        raise InputError("converge requires experiment.checkpoints")
    p = problem_data(body, loss, beta)
    a_sched, a_theory, fell_back = _schedule_rate(p, cps[0])
    tc = composite_constants(p)

    seed = cfg.sampler["seed"]
    gibbs_rng = np.random.default_rng(chain_seed(seed, SEED_GIBBS))
    gb = gibbs_rejection_sample(body, loss, beta, cfg.experiment["gibbs_samples"],
                                gibbs_rng)
    gibbs = gb.samples[:, 0]

    resamples = cfg.experiment["bootstrap_resamples"]
    report = EmpiricalReport(gibbs_acceptance=gb.acceptance_rate)
    report.seeds = {"master": seed, "gibbs": chain_seed(seed, SEED_GIBBS)}
    report.sample_counts = {"chains": cfg.sampler["chains"],
                            "gibbs": cfg.experiment["gibbs_samples"]}
    for i, T in enumerate(cps):
        eta_t = eta_schedule(T, a_sched)
        sc = SamplerConfig(eta=eta_t, beta=beta, horizon=T,
                           seed=chain_seed(seed, SEED_CHECKPOINT + i),
                           chains=cfg.sampler["chains"], x0=cfg.sampler["x0"])
        X = run_ensemble(body, loss, sc, threads=threads)[:, 0]
        match_rng = np.random.default_rng(chain_seed(seed, SEED_MATCH))
        w1 = w1_exact_1d(X, gibbs, match_rng=match_rng)
        boot_rng = np.random.default_rng(chain_seed(seed, SEED_BOOT + 7 * i))
        lo, hi = w1_bootstrap_ci(X, gibbs, boot_rng, resamples=resamples)
        bound = wasserstein_bound(tc, eta_t, a_theory, T)
        report.checkpoints.append({"T": T, "eta": eta_t, "w1": w1,
                                   "ci_lo": lo, "ci_hi": hi, "bound": bound})

    cks = report.checkpoints
    report.fit = rate_fit([c["T"] for c in cks], [c["w1"] for c in cks])
    report.monotone_within_ci = all(
        cks[i + 1]["ci_lo"] <= cks[i]["ci_hi"] for i in range(len(cks) - 1)
    )
    report.exponent_ok = report.fit.exponent <= cfg.experiment["exponent_threshold"]
    report.bound_above_all = all(c["bound"] >= c["w1"] for c in cks)

    _write_csv(out_dir / "checkpoints.csv", ["T", "w1", "ci_lo", "ci_hi"],
               ((c["T"], c["w1"], c["ci_lo"], c["ci_hi"]) for c in cks))
    rep = report.to_dict()
    rep["schedule_rate"] = a_sched
    rep["theory_rate"] = a_theory
    rep["schedule_rate_fallback"] = fell_back
    _write_json(out_dir / "report.json", rep)
    _manifest(cfg, out_dir, {
        "resolved": {"beta": beta, "checkpoints": cps, "schedule_rate": a_sched,
                     "theory_rate": a_theory, "schedule_rate_fallback": fell_back,
                     "master_seed": seed},
    }, t0)
    return 0 if report.passed() else 4


def cmd_couple(cfg: ExperimentConfig, out_dir: Path, threads):
    t0 = time.monotonic()
    body, loss = _resolve_problem(cfg)
    beta, _ = _resolve_beta(cfg, body, loss)
    eta = cfg.sampler["eta"]
    if eta == "auto":
        raise InputError("couple requires an explicit sampler.eta")
    rep = supermartingale_check(
        body, loss, float(eta), beta,
        replicates=cfg.experiment["replicates"],
        horizon=cfg.experiment["couple_horizon"],
        seed=cfg.sampler["seed"],
        resamples=cfg.experiment["bootstrap_resamples"],
    )
    _write_json(out_dir / "coupling_report.json", rep.to_dict())
    steps = rep.coupling_steps[rep.coupling_steps >= 0]
    if len(steps):
        bins = np.histogram_bin_edges(steps, bins=20)
        counts, _ = np.histogram(steps, bins=bins)
        rows = ((float(bins[i]), float(bins[i + 1]), int(counts[i]))
                for i in range(len(counts)))
    else:
        rows = ()
    _write_csv(out_dir / "coupling_times.csv", ["bin_lo", "bin_hi", "count"], rows)
    _manifest(cfg, out_dir, {
        "resolved": {"eta": float(eta), "beta": beta, "a": rep.a,
                     "replicates": rep.replicates, "master_seed": cfg.sampler["seed"]},
    }, t0)
    return 0 if rep.passed else 4


def cmd_constants(cfg: ExperimentConfig, out_dir, threads):
    body, loss = _resolve_problem(cfg)
    beta, _ = _resolve_beta(cfg, body, loss)
    p = problem_data(body, loss, beta,
                     None if cfg.sampler["eta"] == "auto" else cfg.sampler["eta"])
    tc = composite_constants(p)
    payload = {"problem": p.to_dict(), "constants": tc.to_dict()}
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    if out_dir is not None:
        _write_json(out_dir / "constants.json", payload)
    return 0


def cmd_tune(cfg: ExperimentConfig, out_dir: Path, threads):
    t0 = time.monotonic()
    body, loss = _resolve_problem(cfg)
    eps = cfg.experiment["epsilon"]
    if eps is None:
        raise InputError("tune requires experiment.epsilon")
    p = problem_data(body, loss, 1.0)
    tr = tune_parameters(p, eps, lam=cfg.experiment["lambda"],
                         delta=cfg.experiment["delta"], rho=cfg.experiment["rho"],
                         zeta=cfg.experiment["zeta"])
    payload = tr.to_dict()
    payload["problem"] = p.to_dict()
    payload["epsilon"] = eps
    _write_json(out_dir / "tuned.json", payload)
    _manifest(cfg, out_dir, {"resolved": {"epsilon": eps, "beta": tr.beta,
                                          "log10_T": tr.log10_T,
                                          "eta": tr.eta}}, t0)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


_COMMANDS = {
    "sample": cmd_sample,
    "converge": cmd_converge,
    "couple": cmd_couple,
    "constants": cmd_constants,
    "tune": cmd_tune,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="psgla",
                                 description="Projected Langevin sampling experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config master seed")
        sp.add_argument("--threads", type=int, default=1)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config)
        kind = cfg.experiment.get("kind")
        if kind is not None and kind != args.command:
            raise InputError(
                f"config declares experiment.kind={kind!r} but the "
                f"{args.command!r} subcommand was invoked"
            )
        if args.seed is not None:
            cfg.sampler["seed"] = args.seed
        out = args.out or cfg.out
        out_dir = None
        if out is None and args.command != "constants":
            raise InputError("an output directory is required (--out or config.out)")
        if out is not None:
            out_dir = Path(out)
            out_dir.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, out_dir, max(1, args.threads))
    except InputError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except PsglaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
