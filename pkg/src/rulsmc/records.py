"""Run records: everything needed to re-execute a sampler run bit for bit.

A record is a directory::

    record.json   config snapshot, digests, diagnostics, timings, draws (base64)
    data.csv      the calibration data as ingested
    draws.tsv     draws as text, one row per draw
    summary.tsv   per-parameter summary and correlations
    tempering.tsv (SMC only) schedule, ESS and acceptance per step
"""

import json
import os
import time
import uuid
from dataclasses import dataclass, field

import numpy as np

from . import config as cfgmod
from .bayes import TemperedPosterior
from .data import emit_observations, ingest_observations
from .dist.protocol import decode_array, encode_array
from .mcmc import PosteriorSamples, run_mcmc
from .smc import run_smc

RECORD_FILE = "record.json"
DATA_FILE = "data.csv"
FORMAT_VERSION = 1


class ReplayMismatch(RuntimeError):
    pass


@dataclass
class RunRecord:
    run_id: str
    sampler: str  # "mcmc" or "smc"
    config: dict
    dataset_digest: str
    target_digest: str
    draws: np.ndarray
    names: tuple
    acceptance_rate: float
    diagnostics: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    path: str | None = None

    @property
    def seed(self):
        return int(self.config["seed"])

    def samples(self):
        return PosteriorSamples(self.draws, self.names, self.acceptance_rate, self.sampler.upper(), self.seed,
                                dict(self.diagnostics))

    def to_json(self):
        return {
            "format_version": FORMAT_VERSION,
            "run_id": self.run_id,
            "sampler": self.sampler,
            "config": self.config,
            "dataset_digest": self.dataset_digest,
            "target_digest": self.target_digest,
            "names": list(self.names),
            "acceptance_rate": self.acceptance_rate,
            "diagnostics": self.diagnostics,
            "timings": self.timings,
            "draws": encode_array(self.draws),
        }

    @classmethod
    def from_json(cls, obj, path=None):
        if obj.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported record format {obj.get('format_version')!r}")
        return cls(obj["run_id"], obj["sampler"], obj["config"], obj["dataset_digest"], obj["target_digest"],
                   decode_array(obj["draws"], "draws"), tuple(obj["names"]), float(obj["acceptance_rate"]),
                   obj.get("diagnostics", {}), obj.get("timings", {}), path)


def make_target(cfg, observations):
    law = cfgmod.build_law(cfg, observations)
    return TemperedPosterior(observations, cfgmod.build_prior(cfg), law,
                             model_cost=float(cfg["model_cost_s"]))


def _json_diagnostics(samples, sampler):
    d = samples.diagnostics
    if sampler == "smc":
        return {"schedule": [float(p) for p in d["schedule"]], "ess": [float(e) for e in d["ess"]],
                "acceptance": [float(a) for a in d["acceptance"]], "resampled": [bool(r) for r in d["resampled"]],
                "n_steps": int(d["n_steps"])}
    return {"n_total": int(d["n_total"]), "final_cov": np.asarray(d["final_cov"]).tolist()}


def execute(sampler, cfg, observations, executor=None):
    """Run ``sampler`` ("mcmc" or "smc") as configured; returns (samples, target, seconds)."""
    target = make_target(cfg, observations)
    t0 = time.perf_counter()
    if sampler == "mcmc":
        samples = run_mcmc(cfgmod.build_mcmc(cfg), target)
    elif sampler == "smc":
        try:
            samples = run_smc(cfgmod.build_smc(cfg), target, executor)
        finally:
            if executor is not None:
                executor.close()
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    return samples, target, time.perf_counter() - t0


def new_record(sampler, cfg, observations, samples, target, seconds):
    return RunRecord(
        run_id=f"{sampler}-{time.strftime('%Y%m%dT%H%M%S')}-{uuid.uuid4().hex[:8]}",
        sampler=sampler,
        config=cfg,
        dataset_digest=observations.digest(),
        target_digest=target.digest(),
        draws=samples.draws,
        names=tuple(samples.names),
        acceptance_rate=samples.acceptance_rate,
        diagnostics=_json_diagnostics(samples, sampler),
        timings={"sampler_s": seconds},
    )


def summary_table(draws, names):
    """Text table: mean, sd and quantiles per parameter, then the correlation matrix."""
    q = np.quantile(draws, [0.025, 0.5, 0.975], axis=0)
    lines = ["parameter\tmean\tsd\tq2.5\tq50\tq97.5"]
    for j, name in enumerate(names):
        lines.append(f"{name}\t{draws[:, j].mean():.8g}\t{draws[:, j].std(ddof=1):.8g}\t"
                     f"{q[0, j]:.8g}\t{q[1, j]:.8g}\t{q[2, j]:.8g}")
    corr = np.corrcoef(draws, rowvar=False) if len(draws) > 1 else np.eye(len(names))
    lines.append("")
    lines.append("correlation\t" + "\t".join(names))
    for j, name in enumerate(names):
        lines.append(name + "\t" + "\t".join(f"{c:.4f}" for c in corr[j]))
    return "\n".join(lines) + "\n"


def tempering_table(diag):
    lines = ["step\tphi\tess\tacceptance\tresampled"]
    for k, (phi, e, acc, res) in enumerate(zip(diag["schedule"][1:], diag["ess"], diag["acceptance"],
                                                 diag["resampled"]), start=1):
        lines.append(f"{k}\t{phi:.10g}\t{e:.6g}\t{acc:.4f}\t{int(res)}")
    return "\n".join(lines) + "\n"


def save_record(record: RunRecord, observations, directory):
    os.makedirs(directory, exist_ok=True)
    emit_observations(observations, os.path.join(directory, DATA_FILE))
    with open(os.path.join(directory, RECORD_FILE), "w") as fh:
        json.dump(record.to_json(), fh, indent=1)
    np.savetxt(os.path.join(directory, "draws.tsv"), record.draws, delimiter="\t",
               header="\t".join(record.names), comments="", fmt="%.17g")
    with open(os.path.join(directory, "summary.tsv"), "w") as fh:
        fh.write(summary_table(record.draws, record.names))
    if record.sampler == "smc":
        with open(os.path.join(directory, "tempering.tsv"), "w") as fh:
            fh.write(tempering_table(record.diagnostics))
    record.path = directory
    return directory


def load_record(directory):
    """Returns ``(record, observations)``; checks the stored data against its digest."""
    with open(os.path.join(directory, RECORD_FILE)) as fh:
        record = RunRecord.from_json(json.load(fh), directory)
    obs = ingest_observations(os.path.join(directory, DATA_FILE))
    if obs.digest() != record.dataset_digest:
        raise ReplayMismatch(f"{directory}: stored data does not match the recorded digest")
    return record, obs


def replay(record: RunRecord, observations, executor=None):
    """Re-run the recorded configuration; returns ``(samples, identical)``.

    ``executor`` may differ from the recorded one; draws must not.
    """
    if record.sampler == "smc" and executor is None:
        executor = cfgmod.build_executor(record.config, _env_workers())
    samples, target, _ = execute(record.sampler, record.config, observations, executor)
    if target.digest() != record.target_digest:
        raise ReplayMismatch("rebuilt target does not match the recorded digest")
    same = (samples.draws.shape == record.draws.shape
            and np.ascontiguousarray(samples.draws).tobytes() == np.ascontiguousarray(record.draws).tobytes())
    return samples, same


def _env_workers():
    raw = os.environ.get("RULSMC_WORKERS", "")
    return [w.strip() for w in raw.split(",") if w.strip()]
