"""Least-squares calibration of the growth model.

Used on its own as a point estimate and as the starting point of the MCMC
chain.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .bayes import ObservationSeries, PriorSpec
from .damage import GrowthLaw, ModelParams, crack_lengths

log = logging.getLogger(__name__)


@dataclass
class FitResult:
    params: ModelParams
    sum_squares: float
    converged: bool
    cov: np.ndarray  # Gauss-Newton covariance of (log10_alpha, beta)
    n_restarts: int


def _ss(theta, obs, law):
    pred = crack_lengths(theta[0], theta[1], obs.cycles, law)
    r = obs.lengths - pred
    return float(r @ r)


def _coarse_start(obs, law, prior):
    la = np.linspace(*prior.log10_alpha_bounds, 141)
    be = np.linspace(*prior.beta_bounds, 81)
    LA, BE = np.meshgrid(la, be, indexing="ij")
    pred = crack_lengths(LA.ravel()[:, None], BE.ravel()[:, None], obs.cycles[None, :], law)
    ss = np.sum((obs.lengths[None, :] - pred) ** 2, axis=1)
    k = int(np.argmin(ss))
    return np.array([LA.ravel()[k], BE.ravel()[k]])


def _gauss_newton_cov(theta, obs, law, sigma2):
    eps = 1e-6
    jac = np.empty((obs.n, 2))
    for j in range(2):
        step = np.zeros(2)
        step[j] = eps
        hi = crack_lengths(*(theta + step), obs.cycles, law)
        lo = crack_lengths(*(theta - step), obs.cycles, law)
        jac[:, j] = (hi - lo) / (2 * eps)
    try:
        cov = sigma2 * np.linalg.inv(jac.T @ jac)
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        cov = np.diag([1e-4, 1e-4])
    return cov


def least_squares_fit(obs: ObservationSeries, law: GrowthLaw | None = None, init=None,
                      prior: PriorSpec | None = None, max_restarts=20, tol=1e-12):
    """Minimize the sum of squares over ``(log10_alpha, beta)``.

    Nelder-Mead is restarted from its own optimum until a restart no longer
    improves the objective. Without ``init`` the search starts from the best
    point of a coarse grid over the prior box. Sigma is set to
    ``sqrt(SS / n)`` at the optimum.
    """
    law = law or GrowthLaw(a0=float(obs.lengths[0]))
    prior = prior or PriorSpec()
    if init is None:
        x = _coarse_start(obs, law, prior)
    elif isinstance(init, ModelParams):
        x = np.array([init.log10_alpha, init.beta])
    else:
        x = np.asarray(init, dtype=float)[:2]
    best = _ss(x, obs, law)
    converged = False
    restarts = 0
    for restarts in range(1, max_restarts + 1):
        res = minimize(_ss, x, args=(obs, law), method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20_000})
        improved = res.fun < best - tol * max(best, 1e-300)
        if res.fun <= best:
            x, best = res.x, float(res.fun)
        if not improved:
            converged = True
            break
    if not converged:
        log.warning("least-squares fit did not settle after %d restarts (SS=%g)", restarts, best)
    sigma = max(np.sqrt(best / obs.n), 1e-12)
    cov = _gauss_newton_cov(x, obs, law, max(sigma ** 2, 1e-12))
    return FitResult(ModelParams(float(x[0]), float(x[1]), float(sigma)), best, converged, cov, restarts)
