"""Declarative run configuration.

Configs are JSON objects. Keys carry their unit as a suffix (``_mm``,
``_cycles``, ``_s``); unitless keys are counts or fractions. Any subset of
:data:`TEMPLATE` may be given; missing keys take the template value and
unknown keys are rejected.
"""

import copy
import json

from .bayes import PriorSpec
from .damage import GrowthLaw, ModelParams
from .mcmc import McmcConfig
from .smc import SmcConfig

TEMPLATE = {
    "seed": 0,
    "law": {
        "a0_mm": None,  # null -> first observed crack length
        "a_fail_mm": 20.0,
        "cycle_step_cycles": 1,
        "horizon_cycles": None,
    },
    "prior": {
        "log10_alpha_bounds": [-8.0, -1.0],
        "beta_bounds": [0.0, 4.0],
        "sigma2_shape": 0.01,
        "sigma2_scale_mm2": 0.01,
    },
    "mcmc": {
        "n_samples": 50000,
        "n_burn": 20000,
        "thin": 5,
        "adapt_start": 1000,
        "jitter": 1e-10,
    },
    "smc": {
        "n_particles": 1024,
        "n_mcmc": 5,
        "ess_target_frac": 0.5,
        "resample_threshold_frac": 1.0,
        "jitter": 1e-10,
    },
    "executor": {
        "mode": "serial",
        "workers": [],  # host:port list; empty -> $RULSMC_WORKERS
        "n_threads": 1,
        "batch_size": None,
        "max_attempts": 3,
        "backoff_s": 0.1,
        "request_timeout_s": 120.0,
    },
    "synth": {
        "log10_alpha": -4.0,
        "beta": 1.3,
        "sigma_mm": 0.2,
        "a0_mm": 1.0,
        "n_points": 20,
        "cycle_span_cycles": [0, 15000],
    },
    "rul": {
        "checkpoints_cycles": [0, 3000, 6000, 9000, 12000],
        "grid_cycles": [0, 30000, 301],  # start, stop, number of points
        "horizon_cycles": None,  # null -> 10x the least-squares failure cycle
    },
    "model_cost_s": 0.0,
}


class ConfigFileError(ValueError):
    pass


def template():
    return copy.deepcopy(TEMPLATE)


def _merge(base, override, path=""):
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigFileError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigFileError(f"config key {where!r} must be an object")
            _merge(base[key], val, where + ".")
        else:
            base[key] = val
    return base


def load_config(path=None, overrides=None):
    """Template defaults, updated from the file at ``path`` and then ``overrides``."""
    cfg = template()
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigFileError(f"{path}: not valid JSON ({exc})") from None
        if not isinstance(user, dict):
            raise ConfigFileError(f"{path}: top level must be an object")
        _merge(cfg, user)
    if overrides:
        _merge(cfg, overrides)
    return cfg


def build_law(cfg, observations=None):
    c = cfg["law"]
    a0 = c["a0_mm"]
    if a0 is None:
        if observations is None:
            raise ConfigFileError("law.a0_mm is null and no observations were given")
        a0 = float(observations.lengths[0])
    return GrowthLaw(a0=float(a0), a_fail=float(c["a_fail_mm"]), cycle_step=int(c["cycle_step_cycles"]),
                     horizon=c["horizon_cycles"])


def build_prior(cfg):
    c = cfg["prior"]
    return PriorSpec(tuple(c["log10_alpha_bounds"]), tuple(c["beta_bounds"]),
                     float(c["sigma2_shape"]), float(c["sigma2_scale_mm2"]))


def build_mcmc(cfg):
    c = cfg["mcmc"]
    return McmcConfig(n_samples=int(c["n_samples"]), n_burn=int(c["n_burn"]), thin=int(c["thin"]),
                      adapt_start=int(c["adapt_start"]), jitter=float(c["jitter"]), seed=int(cfg["seed"]))


def build_smc(cfg):
    c = cfg["smc"]
    return SmcConfig(n_particles=int(c["n_particles"]), n_mcmc=int(c["n_mcmc"]),
                     ess_target_frac=float(c["ess_target_frac"]),
                     resample_threshold_frac=float(c["resample_threshold_frac"]),
                     jitter=float(c["jitter"]), seed=int(cfg["seed"]))


def build_executor(cfg, default_workers=()):
    from .dist.executor import MutationExecutor, RetryPolicy

    c = cfg["executor"]
    workers = list(c["workers"]) or list(default_workers)
    return MutationExecutor(
        mode=c["mode"],
        workers=tuple(workers) if c["mode"].startswith("remote") else (),
        n_threads=int(c["n_threads"]),
        batch_size=None if c["batch_size"] is None else int(c["batch_size"]),
        retry=RetryPolicy(int(c["max_attempts"]), float(c["backoff_s"])),
        request_timeout=float(c["request_timeout_s"]),
    )


def build_truth(cfg):
    c = cfg["synth"]
    return ModelParams(float(c["log10_alpha"]), float(c["beta"]), float(c["sigma_mm"]))
