"""Tempered sequential Monte Carlo sampler.

Particles start from the prior at ``phi = 0``. Each tempering step picks the
next exponent so the incremental weights keep a target effective sample size,
reweights, resamples systematically and mutates every particle with the
Metropolis-within-Gibbs kernel of :mod:`rulsmc.mcmc`. The loop stops once
``phi`` reaches 1.

Mutation noise for particle ``i`` in step ``s`` comes from the stream keyed by
``(seed, i, s)``, so results do not depend on how the per-particle work is
split across threads or workers.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from . import streams
from .damage import ModelParams
from .mcmc import ConfigError, PosteriorSamples, evaluate_state

log = logging.getLogger(__name__)


class DegeneracyError(RuntimeError):
    """Every particle ended up with zero weight."""


@dataclass(frozen=True)
class Particle:
    params: object
    log_weight: float
    log_like: float
    id: int


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    params: np.ndarray  # (N, dim)
    log_weights: np.ndarray  # normalized, logsumexp == 0
    log_like: np.ndarray  # untempered log-likelihood per particle
    misfit: np.ndarray  # cached model misfit (sum of squares for crack data)
    ids: np.ndarray
    phi: float = 0.0
    step_index: int = 0
    seed: int = 0
    accept_counts: np.ndarray | None = None  # per particle, from the last mutation

    def __len__(self):
        return len(self.params)

    @property
    def weights(self):
        return np.exp(self.log_weights)

    def particle(self, i):
        row = self.params[i]
        params = ModelParams.from_array(row) if len(row) == 3 else row.copy()
        return Particle(params, float(self.log_weights[i]), float(self.log_like[i]), int(self.ids[i]))

    def particles(self):
        return [self.particle(i) for i in range(len(self))]


@dataclass
class SmcConfig:
    n_particles: int = 1024
    n_mcmc: int = 5
    ess_target_frac: float = 0.5
    resample_threshold_frac: float = 1.0
    phi_bisect_tol: float | None = None  # absolute ESS tolerance; None -> 1e-3 * N
    adapt_scale: float | None = None  # None -> 2.4**2 / rw_dim
    jitter: float = 1e-10
    max_steps: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 2:
            raise ConfigError("n_particles must be >= 2")
        if self.n_mcmc < 0:
            raise ConfigError("n_mcmc must be >= 0")
        if not 0.0 < self.ess_target_frac < 1.0:
            raise ConfigError("ess_target_frac must lie in (0, 1)")

    @property
    def bisect_tol(self):
        return self.phi_bisect_tol if self.phi_bisect_tol is not None else 1e-3 * self.n_particles


def normalize_log_weights(log_w):
    total = logsumexp(log_w)
    if not np.isfinite(total):
        raise DegeneracyError("all particle weights are zero")
    return log_w - total


def ess_from_log_weights(log_w):
    """``1 / sum(w**2)`` for the normalized version of ``log_w``."""
    log_w = np.asarray(log_w, dtype=float)
    # shift first so the subtraction below happens at O(1) magnitude
    log_w = log_w - log_w.max()
    return float(np.exp(2.0 * logsumexp(log_w) - logsumexp(2.0 * log_w)))


def ess(ensemble: ParticleEnsemble) -> float:
    return ess_from_log_weights(ensemble.log_weights)


def init_ensemble(config: SmcConfig, target) -> ParticleEnsemble:
    """Draw ``n_particles`` from the prior with equal weights at ``phi = 0``."""
    n = config.n_particles
    x = target.sample_prior(streams.stream(config.seed, streams.PRIOR), n)
    misfit = np.full(n, np.nan)
    log_like = np.full(n, -np.inf)
    ok = np.isfinite(target.log_prior(x))
    if ok.any():
        misfit[ok], log_like[ok] = evaluate_state(x[ok], target)
    return ParticleEnsemble(
        params=x,
        log_weights=np.full(n, -np.log(n)),
        log_like=log_like,
        misfit=misfit,
        ids=np.arange(n),
        phi=0.0,
        step_index=0,
        seed=config.seed,
    )


def _incremental_ess(log_like, dphi):
    with np.errstate(invalid="ignore"):
        inc = np.where(np.isneginf(log_like), -np.inf, dphi * log_like)
    return ess_from_log_weights(inc)


def adapt_delta_phi(ensemble: ParticleEnsemble, config: SmcConfig, target=None, max_iter=200):
    """Next tempering exponent by bisection on the incremental-weight ESS.

    Returns 1 when the full step keeps the ESS at or above
    ``ess_target_frac * N``; otherwise the exponent whose ESS matches the
    target within ``config.bisect_tol``.
    """
    phi = ensemble.phi
    if phi >= 1.0:
        raise ValueError("ensemble is already at phi = 1")
    ll = ensemble.log_like
    goal = config.ess_target_frac * len(ensemble)
    tol = config.bisect_tol
    if _incremental_ess(ll, 1.0 - phi) >= goal:
        return 1.0
    lo, hi = phi, 1.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        e = _incremental_ess(ll, mid - phi)
        if abs(e - goal) <= tol:
            return mid
        if e > goal:
            lo = mid
        else:
            hi = mid
    return lo if lo > phi else hi


def reweight(ensemble: ParticleEnsemble, phi_new: float) -> ParticleEnsemble:
    dphi = phi_new - ensemble.phi
    if dphi < 0:
        raise ValueError(f"phi must not decrease ({ensemble.phi} -> {phi_new})")
    if dphi == 0:
        return ensemble
    with np.errstate(invalid="ignore"):
        inc = np.where(np.isneginf(ensemble.log_like), -np.inf, dphi * ensemble.log_like)
    try:
        log_w = normalize_log_weights(ensemble.log_weights + inc)
    except DegeneracyError as exc:
        raise DegeneracyError(
            f"all weights zero at step {ensemble.step_index}, phi {ensemble.phi} -> {phi_new}") from exc
    return replace(ensemble, log_weights=log_w, phi=float(phi_new))


def systematic_indices(weights, u, n=None):
    """Parent index of each of ``n`` offspring for offset ``u`` in [0, 1).

    ``n`` defaults to the number of parents.
    """
    n = len(weights) if n is None else int(n)
    cum = np.cumsum(weights)
    cum /= cum[-1]
    positions = (u + np.arange(n)) / n
    return np.minimum(np.searchsorted(cum, positions, side="right"), len(weights) - 1)


def resample_systematic(ensemble: ParticleEnsemble, rng) -> ParticleEnsemble:
    idx = systematic_indices(ensemble.weights, rng.random())
    n = len(ensemble)
    return replace(
        ensemble,
        params=ensemble.params[idx].copy(),
        log_like=ensemble.log_like[idx].copy(),
        misfit=ensemble.misfit[idx].copy(),
        log_weights=np.full(n, -np.log(n)),
        ids=np.arange(n),
    )


def proposal_cov(ensemble: ParticleEnsemble, rw_dim, scale, jitter=1e-10):
    """Scaled weighted covariance of the random-walk coordinates plus jitter."""
    x = ensemble.params[:, :rw_dim]
    w = ensemble.weights
    w = w / w.sum()
    mean = w @ x
    d = x - mean
    cov = (d * w[:, None]).T @ d
    return scale * 0.5 * (cov + cov.T) + jitter * np.eye(rw_dim)


def mutate(ensemble: ParticleEnsemble, config: SmcConfig, target, executor=None) -> ParticleEnsemble:
    """Move every particle ``n_mcmc`` kernel steps at the ensemble's phi.

    Weights are unchanged. ``executor`` decides where the per-particle work
    runs (see :mod:`rulsmc.dist`); the default runs it in-process.
    """
    from .dist.executor import JobSpec, MutationExecutor, dispatch_mutation

    if config.n_mcmc == 0:
        return ensemble
    executor = executor or MutationExecutor()
    scale = config.adapt_scale if config.adapt_scale is not None else 2.4 ** 2 / target.rw_dim
    spec = JobSpec(
        phi=ensemble.phi,
        n_mcmc=config.n_mcmc,
        proposal_cov=proposal_cov(ensemble, target.rw_dim, scale, config.jitter),
        step_index=ensemble.step_index,
        seed=ensemble.seed,
    )
    return dispatch_mutation(ensemble, spec, executor, target.with_phi(ensemble.phi))


def run_smc(config: SmcConfig, target, executor=None) -> PosteriorSamples:
    """Temper from the prior to the posterior and return the final particles."""
    ens = init_ensemble(config, target)
    schedule = [0.0]
    ess_trace = []
    accept_trace = []
    resampled = []
    while ens.phi < 1.0:
        if ens.step_index >= config.max_steps:
            raise RuntimeError(f"tempering did not reach phi = 1 in {config.max_steps} steps")
        phi_new = adapt_delta_phi(ens, config)
        ens = replace(reweight(ens, phi_new), step_index=ens.step_index + 1)
        e = ess(ens)
        ess_trace.append(e)
        schedule.append(ens.phi)
        do_resample = config.resample_threshold_frac >= 1.0 or e < config.resample_threshold_frac * len(ens)
        if do_resample:
            ens = resample_systematic(ens, streams.stream(ens.seed, streams.RESAMPLE, 0, ens.step_index))
        resampled.append(do_resample)
        ens = mutate(ens, config, target, executor)
        if ens.accept_counts is not None:
            accept_trace.append(float(ens.accept_counts.mean()) / config.n_mcmc)
        log.debug("step %d phi=%.6g ess=%.1f", ens.step_index, ens.phi, e)
    if not np.all(ens.log_weights == ens.log_weights[0]):
        ens = resample_systematic(ens, streams.stream(ens.seed, streams.RESAMPLE, 0, ens.step_index + 1))
    return PosteriorSamples(
        draws=ens.params.copy(),
        names=tuple(target.names),
        acceptance_rate=float(np.mean(accept_trace)) if accept_trace else 0.0,
        sampler_tag="SMC",
        seed=config.seed,
        diagnostics={
            "schedule": schedule,
            "ess": ess_trace,
            "acceptance": accept_trace,
            "resampled": resampled,
            "n_steps": ens.step_index,
            "final_ensemble": ens,
        },
    )
