"""Statistical model linking observed crack lengths to the growth model.

Observations are ``a_exp = a_pred(q) + eps`` with iid ``eps ~ N(0, sigma^2)``.
The prior is box-uniform on ``(log10_alpha, beta)`` and inverse-gamma on
``sigma^2``. Tempering scales the log-likelihood only.

Both posterior classes here share one vectorized interface used by the
samplers. Parameter batches are float arrays of shape ``(B, dim)``; the first
``rw_dim`` columns are moved by random-walk proposals, and any remaining
column is a scale updated by a conjugate Gibbs draw.
"""

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from .damage import PARAM_NAMES, GrowthLaw, ModelParams, crack_lengths

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class ObservationSeries:
    cycles: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        cycles = np.asarray(self.cycles, dtype=float)
        lengths = np.asarray(self.lengths, dtype=float)
        if cycles.ndim != 1 or cycles.shape != lengths.shape:
            raise ValueError("cycles and lengths must be 1-D with matching length")
        if len(cycles) < 2:
            raise ValueError(f"need at least 2 observations, got {len(cycles)}")
        if np.any(np.diff(cycles) <= 0):
            raise ValueError("cycles must be strictly increasing")
        if np.any(cycles < 0):
            raise ValueError("cycles must be non-negative")
        if not np.all(lengths > 0) or not np.all(np.isfinite(lengths)):
            raise ValueError("crack lengths must be positive and finite")
        object.__setattr__(self, "cycles", cycles)
        object.__setattr__(self, "lengths", lengths)

    @property
    def n(self):
        return len(self.cycles)

    def __eq__(self, other):
        return (isinstance(other, ObservationSeries)
                and np.array_equal(self.cycles, other.cycles)
                and np.array_equal(self.lengths, other.lengths))

    def digest(self):
        h = hashlib.sha256()
        h.update(self.cycles.astype("<f8").tobytes())
        h.update(self.lengths.astype("<f8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class PriorSpec:
    log10_alpha_bounds: tuple = (-8.0, -1.0)
    beta_bounds: tuple = (0.0, 4.0)
    sigma2_shape: float = 0.01
    sigma2_scale: float = 0.01

    def __post_init__(self):
        for name in ("log10_alpha_bounds", "beta_bounds"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name}: need lo < hi, got {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if not (self.sigma2_shape > 0 and self.sigma2_scale > 0):
            raise ValueError("inverse-gamma shape and scale must be positive")

    def bounds(self):
        return np.array([self.log10_alpha_bounds, self.beta_bounds])


def _log_prior_rows(x, prior):
    (alo, ahi), (blo, bhi) = prior.log10_alpha_bounds, prior.beta_bounds
    inside = (x[:, 0] >= alo) & (x[:, 0] <= ahi) & (x[:, 1] >= blo) & (x[:, 1] <= bhi)
    box = -np.log(ahi - alo) - np.log(bhi - blo)
    sig = log_inv_gamma(x[:, 2] ** 2, prior.sigma2_shape, prior.sigma2_scale)
    return np.where(inside & (x[:, 2] > 0), box + sig, -np.inf)


def _busy_wait(seconds):
    if seconds <= 0:
        return
    end = time.perf_counter() + seconds
    while time.perf_counter() < end:
        pass


def log_inv_gamma(x, shape, scale):
    """Log density of an inverse-gamma variate; ``-inf`` for ``x <= 0``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (shape * np.log(scale) - gammaln(shape)
               - (shape + 1.0) * np.log(x) - scale / x)
    return np.where((x > 0) & np.isfinite(x), val, -np.inf)


def gaussian_log_likelihood(ss, n, sigma):
    """``-(n/2) log(2 pi sigma^2) - ss / (2 sigma^2)``; ``-inf`` unless ``sigma > 0``."""
    s2 = np.asarray(sigma, dtype=float) ** 2
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ll = -0.5 * n * np.log(2.0 * np.pi * s2) - ss / (2.0 * s2)
    return np.where((s2 > 0) & np.isfinite(s2), ll, -np.inf)


def sigma2_conditional(prior, n, ss):
    """Inverse-gamma ``(shape, scale)`` of sigma^2 given ``n`` residuals with sum of squares ``ss``.

    Tempering enters as ``n -> phi * n`` and ``ss -> phi * ss``.
    """
    return prior.sigma2_shape + 0.5 * n, prior.sigma2_scale + 0.5 * ss


def tempered(log_prior, log_like, phi):
    """``log_prior + phi * log_like`` with the likelihood ignored at phi = 0."""
    if phi == 0.0:
        return np.asarray(log_prior, dtype=float).copy()
    return log_prior + phi * log_like


@dataclass(frozen=True)
class TemperedPosterior:
    """Prior times likelihood**phi for the crack-growth calibration problem.

    ``model_cost`` adds a busy-wait of that many seconds per model evaluation
    (per parameter set) to emulate an expensive simulator; it does not affect
    any computed value.
    """

    observations: ObservationSeries
    prior: PriorSpec = field(default_factory=PriorSpec)
    law: GrowthLaw | None = None
    phi: float = 1.0
    model_cost: float = field(default=0.0, compare=False)

    names = PARAM_NAMES
    dim = 3
    rw_dim = 2

    def __post_init__(self):
        if not 0.0 <= self.phi <= 1.0:
            raise ValueError(f"phi must lie in [0, 1], got {self.phi}")
        if self.law is None:
            object.__setattr__(self, "law", GrowthLaw(a0=float(self.observations.lengths[0])))

    def with_phi(self, phi):
        return replace(self, phi=float(phi))

    def with_model_cost(self, seconds):
        return replace(self, model_cost=float(seconds))

    def digest(self):
        law = {k: getattr(self.law, k) for k in ("a0", "a_fail", "cycle_step")}
        meta = json.dumps({"law": law, "prior": asdict(self.prior)}, sort_keys=True)
        return hashlib.sha256((self.observations.digest() + meta).encode()).hexdigest()

    # vectorized interface used by the samplers

    def predict(self, x):
        """Predicted crack lengths at the observed cycles, shape ``(B, n)``."""
        x = np.atleast_2d(x)
        _busy_wait(self.model_cost * len(x))
        return crack_lengths(x[:, 0:1], x[:, 1:2], self.observations.cycles[None, :], self.law)

    def misfit(self, x, predictions):
        resid = self.observations.lengths[None, :] - predictions
        return np.sum(resid * resid, axis=1)

    def log_like_from_misfit(self, x, misfit):
        return gaussian_log_likelihood(misfit, self.observations.n, np.atleast_2d(x)[:, 2])

    def log_prior(self, x):
        return _log_prior_rows(np.atleast_2d(x), self.prior)

    def sample_prior(self, rng, n):
        b = self.prior.bounds()
        u = rng.random((n, 2))
        g = rng.standard_gamma(self.prior.sigma2_shape, size=n)
        # the heavy IG(0.01, 0.01) tail overflows for some draws; those rows get -inf prior
        with np.errstate(divide="ignore", over="ignore"):
            sigma = np.sqrt(self.prior.sigma2_scale / g)
        return np.column_stack([b[:, 0] + (b[:, 1] - b[:, 0]) * u, sigma])

    def gibbs_shape(self, phi):
        return sigma2_conditional(self.prior, phi * self.observations.n, 0.0)[0]

    def gibbs_update(self, x, misfit, phi, gamma_draws):
        """Set sigma from ``sigma^2 = scale_post / G`` with ``G ~ Gamma(shape_post)``.

        Draws that would leave ``(0, inf)`` keep the current sigma.
        """
        _, scale = sigma2_conditional(self.prior, phi * self.observations.n, phi * misfit)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            s2 = scale / gamma_draws
            sigma = np.sqrt(s2)
        ok = np.isfinite(sigma) & (sigma > 0)
        x = x.copy()
        x[:, 2] = np.where(ok, sigma, x[:, 2])
        return x

    def initial_state(self):
        """Least-squares point and a Gauss-Newton proposal covariance."""
        from .fit import least_squares_fit

        fit = least_squares_fit(self.observations, self.law)
        return fit.params.as_array(), fit.cov * 2.4 ** 2 / self.rw_dim


@dataclass(frozen=True, eq=False)
class GaussianMeanPosterior:
    """Posterior of a d-dimensional mean under known Gaussian noise.

    ``data`` has shape ``(n, d)``; the prior is uniform on a box wide enough
    that the posterior is ``N(mean(data), noise_cov / n)`` to machine
    precision. Used as an analytic check on both samplers.
    """

    data: np.ndarray
    noise_cov: np.ndarray
    lower: float = -100.0
    upper: float = 100.0
    phi: float = 1.0
    model_cost: float = 0.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        cov = np.atleast_2d(np.asarray(self.noise_cov, dtype=float))
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "noise_cov", cov)
        object.__setattr__(self, "_precision", np.linalg.inv(cov))
        object.__setattr__(self, "_scatter", float(np.einsum(
            "ij,jk,ik->", data - data.mean(0), self._precision, data - data.mean(0))))

    @property
    def dim(self):
        return self.data.shape[1]

    @property
    def rw_dim(self):
        return self.dim

    @property
    def names(self):
        return tuple(f"mu{i}" for i in range(self.dim))

    @property
    def posterior_mean(self):
        return self.data.mean(axis=0)

    @property
    def posterior_cov(self):
        return self.noise_cov / len(self.data)

    def with_phi(self, phi):
        return replace(self, phi=float(phi))

    def with_model_cost(self, seconds):
        return replace(self, model_cost=float(seconds))

    def predict(self, x):
        x = np.atleast_2d(x)
        _busy_wait(self.model_cost * len(x))
        return x[:, : self.dim].copy()

    def misfit(self, x, predictions):
        diff = self.data.mean(axis=0)[None, :] - predictions
        q = np.zeros(len(diff))
        for j in range(self.dim):
            for k in range(self.dim):
                q = q + self._precision[j, k] * diff[:, j] * diff[:, k]
        return len(self.data) * q + self._scatter

    def log_like_from_misfit(self, x, misfit):
        n, d = self.data.shape
        _, logdet = np.linalg.slogdet(self.noise_cov)
        return -0.5 * n * (d * LOG_2PI + logdet) - 0.5 * misfit

    def log_prior(self, x):
        x = np.atleast_2d(x)
        inside = np.all((x >= self.lower) & (x <= self.upper), axis=1)
        return np.where(inside, -self.dim * np.log(self.upper - self.lower), -np.inf)

    def sample_prior(self, rng, n):
        return self.lower + (self.upper - self.lower) * rng.random((n, self.dim))

    def gibbs_shape(self, phi):
        return None

    def initial_state(self):
        return self.data.mean(axis=0), self.posterior_cov * 2.4 ** 2 / self.dim


# scalar conveniences over ModelParams

def sum_squares(params: ModelParams, obs: ObservationSeries, law: GrowthLaw) -> float:
    pred = crack_lengths(params.log10_alpha, params.beta, obs.cycles, law)
    resid = obs.lengths - pred
    return float(np.sum(resid * resid))


def log_likelihood(params: ModelParams, obs: ObservationSeries, law: GrowthLaw) -> float:
    ss = sum_squares(params, obs, law)
    s2 = params.sigma ** 2
    return float(-0.5 * obs.n * np.log(2.0 * np.pi * s2) - ss / (2.0 * s2))


def log_prior(params: ModelParams, prior: PriorSpec) -> float:
    return float(_log_prior_rows(params.as_array()[None, :], prior)[0])


def log_tempered_posterior(params: ModelParams, tp: TemperedPosterior) -> float:
    lp = log_prior(params, tp.prior)
    if not np.isfinite(lp):
        return -np.inf
    if tp.phi == 0.0:
        return lp
    return lp + tp.phi * log_likelihood(params, tp.observations, tp.law)
