"""Posterior predictive crack bands and remaining-useful-life distributions.

Each posterior draw is pushed through the growth law. Predictive bands add
observation noise per grid point from a stream keyed by draw index, so a band
is reproducible from ``(samples, grid, seed)`` alone. RUL uses the noise-free
trajectory's first crossing of ``a_fail``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .damage import GrowthLaw, crack_lengths, failure_cycles

log = logging.getLogger(__name__)

BAND_QUANTILES = (0.025, 0.5, 0.975)
RUL_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
DEFAULT_HORIZON = 10_000_000  # cycles; cap for draws that never reach a_fail
_QUANTILE_METHOD = "linear"


@dataclass(frozen=True, eq=False)
class PredictiveBand:
    cycles: np.ndarray
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray
    levels: tuple = BAND_QUANTILES

    def __post_init__(self):
        if not (np.all(self.lower <= self.median) and np.all(self.median <= self.upper)):
            raise ValueError("band quantiles are not ordered")

    def contains(self, cycles, lengths):
        """Boolean mask: which ``(cycle, length)`` points fall inside the band.

        ``cycles`` must be a subset of the band grid.
        """
        idx = np.searchsorted(self.cycles, cycles)
        if np.any(idx >= len(self.cycles)) or np.any(self.cycles[np.minimum(idx, len(self.cycles) - 1)] != cycles):
            raise ValueError("cycles are not on the band grid")
        lengths = np.asarray(lengths, dtype=float)
        return (lengths >= self.lower[idx]) & (lengths <= self.upper[idx])

    def as_table(self):
        return np.column_stack([self.cycles, self.lower, self.median, self.upper])


@dataclass(frozen=True, eq=False)
class RulDistribution:
    current_cycle: int
    rul_samples: np.ndarray  # int64, one per draw
    censored: np.ndarray  # True where the draw did not fail within the horizon
    quantiles: tuple = field(default=())
    horizon: int = DEFAULT_HORIZON

    def __post_init__(self):
        if np.any(self.rul_samples < 0):
            raise ValueError("negative remaining life")
        if not self.quantiles:
            q = np.quantile(self.rul_samples, RUL_QUANTILES, method=_QUANTILE_METHOD)
            object.__setattr__(self, "quantiles", tuple(float(v) for v in q))

    @property
    def median(self):
        return self.quantiles[2]

    @property
    def censored_fraction(self):
        return float(np.mean(self.censored))


def default_horizon(observations, law: GrowthLaw, factor=10):
    """``factor`` times the least-squares failure cycle, in whole cycles.

    Falls back to :data:`DEFAULT_HORIZON` when the fitted trajectory itself
    never reaches ``a_fail``.
    """
    from .fit import least_squares_fit

    fit = least_squares_fit(observations, law)
    n_fail, failed = failure_cycles(fit.params.as_array()[None, :2], law.with_horizon(DEFAULT_HORIZON))
    return int(factor * n_fail[0]) if failed[0] else DEFAULT_HORIZON


def _theta(samples):
    draws = getattr(samples, "draws", samples)
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    if draws.shape[0] == 0:
        raise ValueError("no posterior draws")
    if draws.shape[1] != 3:
        raise ValueError(f"expected (log10_alpha, beta, sigma) draws, got {draws.shape[1]} columns")
    return draws


def predictive_band(samples, law: GrowthLaw, grid, seed=0, levels=BAND_QUANTILES) -> PredictiveBand:
    """Equal-tailed predictive band of noisy crack length on ``grid``.

    Parameters
    ----------
    samples : PosteriorSamples or array (n_draws, 3)
    law : GrowthLaw
    grid : array_like
        Cycle counts, sorted ascending.
    seed : int
        Master seed; draw ``k`` uses its own noise stream ``(seed, k)``.
    levels : tuple of float
        Lower, middle and upper quantile levels.

    Returns
    -------
    PredictiveBand
    """
    draws = _theta(samples)
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted")
    paths = crack_lengths(draws[:, :1], draws[:, 1:2], grid[None, :], law)
    noise = np.empty_like(paths)
    for k in range(len(draws)):
        noise[k] = streams.stream(seed, streams.PREDICTIVE, k).standard_normal(len(grid))
    paths = paths + draws[:, 2:3] * noise
    lo, mid, hi = np.quantile(paths, levels, axis=0, method=_QUANTILE_METHOD)
    return PredictiveBand(grid, lo, mid, hi, tuple(levels))


def _failure(draws, law, horizon):
    law = law.with_horizon(horizon if law.horizon is None else law.horizon)
    n_fail, failed = failure_cycles(draws[:, :2], law)
    return n_fail, failed, int(np.ceil(law.horizon))


def rul_distribution(samples, law: GrowthLaw, current_cycle, horizon=DEFAULT_HORIZON) -> RulDistribution:
    """Remaining cycles to failure for each draw, counted from ``current_cycle``.

    Draws that do not reach ``law.a_fail`` within the horizon (``law.horizon``
    if set, else ``horizon``) are recorded at the horizon and flagged in
    ``censored``.
    """
    if current_cycle < 0:
        raise ValueError("current_cycle must be >= 0")
    n_fail, failed, h = _failure(_theta(samples), law, horizon)
    return _make_rul(n_fail, failed, int(current_cycle), h)


def _make_rul(n_fail, failed, current, h):
    rul = np.maximum(n_fail - current, 0).astype(np.int64)
    if not failed.all():
        log.info("%d of %d draws do not fail within %d cycles", int((~failed).sum()), len(failed), h)
    return RulDistribution(current, rul, ~failed, horizon=h)


def rul_series(samples, law: GrowthLaw, checkpoints, horizon=DEFAULT_HORIZON):
    """:func:`rul_distribution` at each of the increasing ``checkpoints``."""
    checkpoints = [int(c) for c in checkpoints]
    if any(c < 0 for c in checkpoints) or any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ValueError("checkpoints must be non-negative and strictly increasing")
    n_fail, failed, h = _failure(_theta(samples), law, horizon)
    return [_make_rul(n_fail, failed, c, h) for c in checkpoints]


def rul_table(series):
    """Rows of (current_cycle, q05, q25, q50, q75, q95, censored_fraction)."""
    return np.array([[d.current_cycle, *d.quantiles, d.censored_fraction] for d in series])
