"""Experiment configuration: a JSON tree with a strict schema, defaults
materialized on load and echoed back on save."""

import copy
import json
from dataclasses import dataclass

import numpy as np

from ..network import generate_scenario
from ..sensing import SensingModel

_SCENARIO_DEFAULTS = {
    "explicit": None,        # full Scenario fields, bypassing the generator
    "seed": 0,
    "Q": 3,
    "N": 16,
    "L": 5,
    "dist_ratio": 6.0,
    "pathloss_exp": 3.0,
    "pu_gain": 1e-2,
    "pu_dist_ratio": None,
    "noise": 1.0,
    "snr_db": 2.0,
    "pmax_factor": 2.0,
    "Imax_local": 0.5,
    "Imax_global": None,
    "alpha": 0.5,
    "beta": 0.5,
    "tau_min": 0.25,
    "tau_max": 4.0,
    "c": 100.0,
    "los_factor": 2.0,
    "normalize_direct": False,
    "cross_scale": 1.0,
}

_MODEL_DEFAULTS = {
    "explicit": None,        # detector moments per (player, carrier)
    "snr_det_db": 0.0,
    "f": 1.0,
    "T": 10.0,
}

_ALGORITHM_DEFAULTS = {
    "name": "algo1",
    "schedule": "jacobi",
    "staleness": 0,
    "schedule_seed": 0,
    "window": 4,
    "price": 0.0,
    "tol": 1e-6,
    "max_iters": 3000,
    "t": None,
    "prox_gain": 1.0,
    "relaxation": 0.5,
    "fixed_tau": None,
    "grad_tol": 1e-7,
    "comp_tol": 1e-7,
    "multistart": 1,
}

_OUTPUT_DEFAULTS = {
    "dir": "out",
    "formats": ["csv", "json"],
}

_POSITIVE = {"Q", "N", "L", "dist_ratio", "noise", "Imax_local", "alpha",
             "beta", "tau_min", "tau_max", "pmax_factor", "f", "T",
             "prox_gain", "tol", "max_iters", "grad_tol", "comp_tol",
             "multistart", "window"}
_NONNEG = {"c", "pu_gain", "price", "staleness", "los_factor", "cross_scale",
           "pathloss_exp"}
_ALGO_NAMES = ("algo1", "algo1-fixed-tau", "algo3", "algo4")
_SCHEDULES = ("jacobi", "gauss-seidel", "asynchronous")


class ConfigError(ValueError):
    pass


def _merge_section(name, user, defaults):
    out = copy.deepcopy(defaults)
    for key, val in user.items():
        if key not in defaults:
            raise ConfigError(f"unknown key '{name}.{key}'")
        out[key] = val
    for key, val in out.items():
        if key in _POSITIVE and val is not None and not (np.isscalar(val) and val > 0):
            raise ConfigError(f"'{name}.{key}' must be positive, got {val!r}")
        if key in _NONNEG and val is not None and not (np.isscalar(val) and val >= 0):
            raise ConfigError(f"'{name}.{key}' must be >= 0, got {val!r}")
    return out


@dataclass
class ExperimentConfig:
    scenario: dict
    model: dict
    algorithm: dict
    output: dict

    def to_dict(self):
        return {"scenario": self.scenario, "model": self.model,
                "algorithm": self.algorithm, "output": self.output}

    def build(self):
        """Materialize the Scenario and SensingModel objects."""
        from ..network import Scenario
        if self.scenario["explicit"] is not None:
            scenario = Scenario(**self.scenario["explicit"])
        else:
            sc = {k: v for k, v in self.scenario.items() if k != "explicit"}
            cross_scale = sc.pop("cross_scale")
            scenario = generate_scenario(
                sc.pop("seed"), sc.pop("Q"), sc.pop("N"), sc.pop("L"), **sc)
            if cross_scale != 1.0:
                H = scenario.H.copy()
                mask = ~np.eye(scenario.Q, dtype=bool)
                H[mask] *= cross_scale
                from dataclasses import replace
                scenario = replace(scenario, H=H)
        if self.model["explicit"] is not None:
            model = SensingModel(**self.model["explicit"])
        else:
            snr = 10.0 ** (self.model["snr_det_db"] / 10.0)
            model = SensingModel.from_snr(scenario.Q, scenario.N, snr_det=snr,
                                          noise_scale=self.scenario["noise"],
                                          f=self.model["f"], T=self.model["T"])
        if model.mu0.shape != (scenario.Q, scenario.N):
            raise ConfigError(
                f"'model.explicit' shape {model.mu0.shape} does not match "
                f"the scenario ({scenario.Q}, {scenario.N})")
        return scenario, model


def validate(tree):
    if not isinstance(tree, dict):
        raise ConfigError("config root must be an object")
    known = {"scenario", "model", "algorithm", "output"}
    for key in tree:
        if key not in known:
            raise ConfigError(f"unknown top-level key '{key}'")
    cfg = ExperimentConfig(
        scenario=_merge_section("scenario", tree.get("scenario", {}),
                                _SCENARIO_DEFAULTS),
        model=_merge_section("model", tree.get("model", {}), _MODEL_DEFAULTS),
        algorithm=_merge_section("algorithm", tree.get("algorithm", {}),
                                 _ALGORITHM_DEFAULTS),
        output=_merge_section("output", tree.get("output", {}),
                              _OUTPUT_DEFAULTS),
    )
    if cfg.algorithm["name"] not in _ALGO_NAMES:
        raise ConfigError(
            f"'algorithm.name' must be one of {_ALGO_NAMES}, "
            f"got {cfg.algorithm['name']!r}")
    if cfg.algorithm["schedule"] not in _SCHEDULES:
        raise ConfigError(
            f"'algorithm.schedule' must be one of {_SCHEDULES}, "
            f"got {cfg.algorithm['schedule']!r}")
    for section in ("scenario", "model"):
        exp = getattr(cfg, section)["explicit"]
        if exp is not None and not isinstance(exp, dict):
            raise ConfigError(f"'{section}.explicit' must be an object of "
                              "constructor fields")
    if cfg.scenario["explicit"] is None:
        if not 0 < cfg.scenario["alpha"] <= 0.5:
            raise ConfigError("'scenario.alpha' must lie in (0, 1/2]")
        if not 0 < cfg.scenario["beta"] <= 0.5:
            raise ConfigError("'scenario.beta' must lie in (0, 1/2]")
        if cfg.scenario["tau_max"] <= cfg.scenario["tau_min"]:
            raise ConfigError("'scenario.tau_max' must exceed 'scenario.tau_min'")
        if cfg.model["explicit"] is None and \
                cfg.scenario["tau_max"] >= cfg.model["T"]:
            raise ConfigError("'scenario.tau_max' must be below the frame 'model.T'")
    return cfg


def load_config(path):
    """Parse and validate a config file; all defaults are filled in."""
    try:
        with open(path) as fh:
            tree = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error at line {exc.lineno}: {exc.msg}")
    return validate(tree)


def loads_config(text):
    return validate(json.loads(text))


def save_config(cfg, path):
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
