"""Experiment configuration: a single JSON file with explicit defaults.

``ExperimentConfig.from_dict`` fills every default, so serializing the parsed
config and parsing it again is the identity; manifests embed the resolved
form.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .errors import InputError

_SAMPLER_DEFAULTS = {
    "eta": "auto",
    "beta": 1.0,
    "T": 1000,
    "chains": 1,
    "seed": 0,
    "substeps": 1,
    "x0": "origin",
    "record_stride": None,
}

_EXPERIMENT_DEFAULTS = {
    "kind": None,
    "checkpoints": None,
    "epsilon": None,
    "lambda": 0.5,
    "delta": 0.1,
    "rho": None,
    "zeta": None,
    "replicates": 2000,
    "couple_horizon": 500,
    "gibbs_samples": 100000,
    "known_min": None,
    "exponent_threshold": -0.15,
    "save_distances": False,
    "bootstrap_resamples": 1000,
}

KINDS = ("sample", "converge", "couple", "constants", "tune")


@dataclass
class ExperimentConfig:
    body: dict
    loss: dict
    sampler: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    out: Optional[str] = None

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise InputError("config must be a JSON object")
        for key in ("body", "loss"):
            if key not in d:
                raise InputError(f"config is missing the '{key}' section")
        unknown = set(d) - {"body", "loss", "sampler", "experiment", "out"}
        if unknown:
            raise InputError(f"unknown config sections: {sorted(unknown)}")
        sampler = dict(_SAMPLER_DEFAULTS)
        extra = set(d.get("sampler", {})) - set(_SAMPLER_DEFAULTS)
        if extra:
            raise InputError(f"unknown sampler fields: {sorted(extra)}")
        sampler.update(d.get("sampler", {}))
        experiment = dict(_EXPERIMENT_DEFAULTS)
        extra = set(d.get("experiment", {})) - set(_EXPERIMENT_DEFAULTS)
        if extra:
            raise InputError(f"unknown experiment fields: {sorted(extra)}")
        experiment.update(d.get("experiment", {}))
        cfg = cls(body=dict(d["body"]), loss=dict(d["loss"]), sampler=sampler,
                  experiment=experiment, out=d.get("out"))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc

    def validate(self):
        s = self.sampler
        if s["eta"] != "auto" and (not isinstance(s["eta"], (int, float)) or s["eta"] <= 0):
            raise InputError("sampler.eta must be positive or 'auto'")
        if s["beta"] != "auto" and (not isinstance(s["beta"], (int, float)) or s["beta"] <= 0):
            raise InputError("sampler.beta must be positive or 'auto'")
        if s["beta"] == "auto" and self.experiment.get("epsilon") is None:
            raise InputError("sampler.beta='auto' requires experiment.epsilon")
        if not isinstance(s["T"], int) or s["T"] < 0:
            raise InputError("sampler.T must be a nonnegative integer")
        if not isinstance(s["chains"], int) or s["chains"] < 1:
            raise InputError("sampler.chains must be a positive integer")
        if s["x0"] not in ("origin", "uniform"):
            raise InputError("sampler.x0 must be 'origin' or 'uniform'")
        kind = self.experiment.get("kind")
        if kind is not None and kind not in KINDS:
            raise InputError(f"experiment.kind must be one of {KINDS}")
        cps = self.experiment.get("checkpoints")
        if cps is not None:
            if not all(isinstance(c, int) for c in cps):
                raise InputError("checkpoints must be integers")
            if sorted(set(cps)) != list(cps):
                raise InputError("checkpoints must be strictly increasing")
            if cps and cps[0] < 4:
                raise InputError("checkpoints must be >= 4")
        eps = self.experiment.get("epsilon")
        if eps is not None and eps <= 0:
            raise InputError("experiment.epsilon must be positive")

    def to_dict(self):
        return {
            "body": self.body,
            "loss": self.loss,
            "sampler": dict(self.sampler),
            "experiment": dict(self.experiment),
            "out": self.out,
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
