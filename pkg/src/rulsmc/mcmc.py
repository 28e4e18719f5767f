"""Adaptive Metropolis-within-Gibbs sampling.

The random-walk block ``(log10_alpha, beta)`` moves by Metropolis steps with a
Gaussian proposal; sigma is refreshed by an exact inverse-gamma draw after
every Metropolis step. The same vectorized kernel drives the serial chain in
:func:`run_mcmc` and the particle mutations of the SMC sampler, so a particle
mutated at ``phi = 1`` follows exactly the chain that :func:`mcmc_step` and
:func:`gibbs_sigma` would produce from the same random stream.

Random numbers are consumed per step in a fixed order: ``rw_dim`` standard
normals for the proposal, one uniform for the accept test, then one
standard-gamma variate for the scale update (when the target has one).
"""

from dataclasses import dataclass, field

import numpy as np

from . import streams
from .bayes import TemperedPosterior, tempered
from .damage import PARAM_NAMES, ModelParams


class ConfigError(ValueError):
    pass


@dataclass
class PosteriorSamples:
    draws: np.ndarray
    names: tuple
    acceptance_rate: float
    sampler_tag: str
    seed: int
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.draws) == 0:
            raise ValueError("no draws retained")
        if not 0.0 <= self.acceptance_rate <= 1.0:
            raise ValueError(f"acceptance rate out of range: {self.acceptance_rate}")

    def __len__(self):
        return len(self.draws)

    def mean(self):
        return self.draws.mean(axis=0)

    def params(self):
        if tuple(self.names) != PARAM_NAMES:
            raise TypeError("draws are not crack-growth parameters")
        return [ModelParams.from_array(row) for row in self.draws]


@dataclass
class McmcConfig:
    n_samples: int = 50_000
    n_burn: int = 20_000
    thin: int = 5
    init: object = None  # ModelParams or array; None -> least-squares/MAP point
    init_cov: np.ndarray | None = None
    adapt_start: int = 1000
    adapt_scale: float | None = None  # None -> 2.4**2 / d
    jitter: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.n_burn < self.n_samples:
            raise ConfigError("need 0 <= n_burn < n_samples")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")
        if self.init_cov is not None:
            cov = np.atleast_2d(np.asarray(self.init_cov, dtype=float))
            if not np.allclose(cov, cov.T):
                raise ConfigError("init_cov must be symmetric")
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise ConfigError("init_cov must be positive definite") from None
            self.init_cov = cov


def proposal_factor(cov):
    """Lower Cholesky factor of a proposal covariance; zero matrix allowed."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if not cov.any():
        return np.zeros_like(cov)
    return np.linalg.cholesky(0.5 * (cov + cov.T))


def propose(x, chol, z):
    """Random-walk proposal ``x + chol @ z`` on the leading columns.

    Written elementwise so each row's result is independent of the batch it
    sits in.
    """
    y = x.copy()
    r = chol.shape[0]
    for j in range(r):
        acc = x[:, j]
        for k in range(j + 1):
            acc = acc + chol[j, k] * z[:, k]
        y[:, j] = acc
    return y


def draw_step_noise(rng, n_steps, rw_dim, gamma_shape):
    """Per-step noise ``(Z, U, G)`` for one chain, drawn in kernel order."""
    z = np.empty((n_steps, rw_dim))
    u = np.empty(n_steps)
    g = np.full(n_steps, np.nan)
    for i in range(n_steps):
        z[i] = rng.standard_normal(rw_dim)
        u[i] = rng.random()
        if gamma_shape is not None:
            g[i] = rng.standard_gamma(gamma_shape)
    return z, u, g


def metropolis(x, log_like, misfit, target, phi, chol, z, u, evaluate=None):
    """One vectorized Metropolis step; returns ``(x, log_like, misfit, accepted)``.

    ``evaluate`` maps a parameter batch to model outputs and defaults to
    ``target.predict``; only proposals inside the prior support are evaluated.
    """
    evaluate = evaluate or target.predict
    lp = target.log_prior(x)
    xp = propose(x, chol, z)
    lpp = target.log_prior(xp)
    ok = np.isfinite(lpp)
    llp = np.full(len(x), -np.inf)
    misp = np.full(len(x), np.nan)
    if ok.any():
        outputs = evaluate(xp[ok])
        misp[ok] = target.misfit(xp[ok], outputs)
        llp[ok] = target.log_like_from_misfit(xp[ok], misp[ok])
    with np.errstate(invalid="ignore", over="ignore"):
        log_r = tempered(lpp, llp, phi) - tempered(lp, log_like, phi)
        ratio = np.exp(np.minimum(log_r, 0.0))
    # strict inequality: ties are rejected
    accepted = ok & (ratio > u)
    x = np.where(accepted[:, None], xp, x)
    log_like = np.where(accepted, llp, log_like)
    misfit = np.where(accepted, misp, misfit)
    return x, log_like, misfit, accepted


def gibbs(x, log_like, misfit, target, phi, g):
    if target.gibbs_shape(phi) is None:
        return x, log_like
    x = target.gibbs_update(x, misfit, phi, g)
    return x, target.log_like_from_misfit(x, misfit)


def kernel_sweep(x, log_like, misfit, target, phi, chol, z, u, g, evaluate=None):
    """Run ``z.shape[1]`` Metropolis-within-Gibbs steps on a batch.

    ``z`` is ``(B, n_steps, rw_dim)``, ``u`` and ``g`` are ``(B, n_steps)``.
    Returns ``(x, log_like, misfit, accept_counts)``.
    """
    counts = np.zeros(len(x), dtype=np.int64)
    for i in range(z.shape[1]):
        x, log_like, misfit, acc = metropolis(x, log_like, misfit, target, phi,
                                              chol, z[:, i], u[:, i], evaluate)
        counts += acc
        x, log_like = gibbs(x, log_like, misfit, target, phi, g[:, i])
    return x, log_like, misfit, counts


def _as_row(current):
    if isinstance(current, ModelParams):
        return current.as_array()[None, :]
    return np.atleast_2d(np.asarray(current, dtype=float))


def _like_input(row, current):
    if isinstance(current, ModelParams):
        return ModelParams.from_array(row[0])
    return row[0] if np.ndim(current) == 1 else row


def evaluate_state(x, target, evaluate=None):
    """Misfit and log-likelihood of a batch of points."""
    evaluate = evaluate or target.predict
    misfit = target.misfit(x, evaluate(x))
    return misfit, target.log_like_from_misfit(x, misfit)


def mcmc_step(current, cov, target, rng):
    """One Metropolis step against ``target`` at its own ``phi``.

    Returns ``(next, accepted)``; the scale column is left untouched.
    """
    x = _as_row(current)
    misfit, ll = evaluate_state(x, target)
    z = rng.standard_normal(target.rw_dim)[None, :]
    u = np.array([rng.random()])
    x, _, _, acc = metropolis(x, ll, misfit, target, target.phi, proposal_factor(cov), z, u)
    return _like_input(x, current), bool(acc[0])


def gibbs_sigma(current, obs, law, prior, rng, phi=1.0):
    """Draw sigma from its inverse-gamma full conditional."""
    target = TemperedPosterior(obs, prior, law, phi=phi)
    x = _as_row(current)
    misfit, ll = evaluate_state(x, target)
    g = np.array([rng.standard_gamma(target.gibbs_shape(phi))])
    x, _ = gibbs(x, ll, misfit, target, phi, g)
    return _like_input(x, current)


def run_mcmc(config: McmcConfig, target) -> PosteriorSamples:
    """Serial adaptive Metropolis chain with burn-in and thinning.

    From ``config.adapt_start`` on, the proposal covariance is the running
    covariance of all previous random-walk coordinates times ``adapt_scale``
    plus ``jitter * I``.
    """
    d, r = target.dim, target.rw_dim
    scale = config.adapt_scale if config.adapt_scale is not None else 2.4 ** 2 / r
    if config.init is None or config.init_cov is None:
        x_fit, cov_fit = target.initial_state()
    x0 = _as_row(config.init)[0] if config.init is not None else x_fit
    cov = config.init_cov if config.init_cov is not None else cov_fit
    x = np.array(x0, dtype=float).reshape(1, d)
    misfit, ll = evaluate_state(x, target)
    if not np.isfinite(tempered(target.log_prior(x), ll, target.phi)[0]):
        raise ConfigError(f"target is not finite at the initial point {x[0]}")

    rng = streams.stream(config.seed, streams.CHAIN)
    shape = target.gibbs_shape(target.phi)
    chol = proposal_factor(cov)
    chain = np.empty((config.n_samples, d))
    mean = np.zeros(r)
    m2 = np.zeros((r, r))
    n_accept = 0
    jitter = config.jitter * np.eye(r)
    for i in range(config.n_samples):
        if i >= config.adapt_start and i >= 2:
            cov = scale * (m2 / (i - 1)) + jitter
            chol = proposal_factor(cov)
        z, u, g = draw_step_noise(rng, 1, r, shape)
        x, ll, misfit, acc = metropolis(x, ll, misfit, target, target.phi, chol, z, u)
        n_accept += int(acc[0])
        x, ll = gibbs(x, ll, misfit, target, target.phi, g)
        chain[i] = x[0]
        # Welford update of the running mean/covariance
        delta = x[0, :r] - mean
        mean = mean + delta / (i + 1)
        m2 = m2 + np.outer(delta, x[0, :r] - mean)

    kept = chain[config.n_burn :: config.thin]
    return PosteriorSamples(
        draws=kept,
        names=tuple(target.names),
        acceptance_rate=n_accept / config.n_samples,
        sampler_tag="MCMC",
        seed=config.seed,
        diagnostics={"final_cov": cov, "n_total": config.n_samples},
    )
