"""Power-law fatigue crack growth model.

Crack length follows ``da/dN = alpha * a**beta`` from an initial length ``a0``
and is reported up to the failure length ``a_fail``; anything at or past the
failure length is reported as ``a_fail``. The growth coefficient is always
handled through ``log10_alpha``.

The closed form is evaluated as ``a0 * (1 + c*t)**(1/c)`` with ``c = 1 - beta``
and ``t = alpha * N * a0**(beta - 1)``; near ``beta = 1`` the equivalent
``a0 * exp(log1p(c*t) / c)`` is used to avoid cancellation. All evaluation is
elementwise over numpy arrays, so a batch of parameter sets produces exactly
the same numbers as evaluating them one at a time.
"""

from dataclasses import dataclass

import numpy as np

PARAM_NAMES = ("log10_alpha", "beta", "sigma")

# below this |1 - beta| the log1p/exp branch is used
_NEAR_LINEAR = 0.05


class NoFailureError(ValueError):
    """Growth does not reach the failure length within the horizon."""


@dataclass(frozen=True)
class ModelParams:
    log10_alpha: float
    beta: float
    sigma: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.log10_alpha) and np.isfinite(self.beta)):
            raise ValueError(f"non-finite growth parameters: {self}")
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")

    @property
    def alpha(self):
        return 10.0 ** self.log10_alpha

    def as_array(self):
        return np.array([self.log10_alpha, self.beta, self.sigma], dtype=float)

    @classmethod
    def from_array(cls, row):
        return cls(float(row[0]), float(row[1]), float(row[2]))


@dataclass(frozen=True)
class GrowthLaw:
    """Initial/failure crack lengths (mm) and integration granularity.

    ``horizon`` is the largest cycle count considered when searching for
    failure; ``None`` means unbounded.
    """

    a0: float
    a_fail: float = 20.0
    cycle_step: int = 1
    horizon: float | None = None

    def __post_init__(self):
        if not 0 < self.a0 < self.a_fail:
            raise ValueError(f"need 0 < a0 < a_fail, got a0={self.a0}, a_fail={self.a_fail}")
        if int(self.cycle_step) != self.cycle_step or self.cycle_step < 1:
            raise ValueError(f"cycle_step must be a positive integer, got {self.cycle_step}")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    def with_horizon(self, horizon):
        return GrowthLaw(self.a0, self.a_fail, self.cycle_step, horizon)


@dataclass(frozen=True)
class CrackTrajectory:
    cycles: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        if self.cycles.shape != self.lengths.shape:
            raise ValueError("cycles and lengths must have the same shape")

    def __len__(self):
        return len(self.cycles)


def _as_cycles(cycles):
    cycles = np.asarray(cycles, dtype=float)
    if cycles.ndim != 1:
        raise ValueError("cycles must be one-dimensional")
    if np.any(cycles < 0) or not np.all(np.isfinite(cycles)):
        raise ValueError("cycles must be finite and non-negative")
    return cycles


def crack_lengths(log10_alpha, beta, cycles, law):
    """Vectorized closed form.

    ``log10_alpha`` and ``beta`` broadcast against ``cycles``; typical use is
    column vectors ``(B, 1)`` against a row of cycles ``(M,)``.
    """
    log10_alpha = np.asarray(log10_alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    cycles = np.asarray(cycles, dtype=float)
    a0, a_fail = float(law.a0), float(law.a_fail)
    c = 1.0 - beta
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        t = (10.0 ** log10_alpha) * cycles * a0 ** (beta - 1.0)
        g = 1.0 + c * t
        blown = g <= 0.0
        safe_c = np.where(c == 0.0, 1.0, c)
        near = np.abs(c) < _NEAR_LINEAR
        growth_log = np.where(c == 0.0, t, np.log1p(c * t) / safe_c)
        a_near = a0 * np.exp(growth_log)
        a_far = a0 * np.power(np.where(blown, 1.0, g), 1.0 / safe_c)
        a = np.where(near, a_near, a_far)
        a = np.where(blown | np.isnan(a) | (a >= a_fail), a_fail, a)
    if not np.all(np.isfinite(a)):
        raise RuntimeError("crack length evaluation escaped the failure cap")
    return a


def predict_crack_batch(params_batch, law, cycles):
    """Trajectories for a batch of parameter sets in one vectorized pass.

    ``params_batch`` is a sequence of :class:`ModelParams` or an array whose
    first two columns are ``(log10_alpha, beta)``.
    """
    theta = _params_matrix(params_batch)
    cycles = _as_cycles(cycles)
    lengths = crack_lengths(theta[:, 0:1], theta[:, 1:2], cycles[None, :], law)
    return [CrackTrajectory(cycles.copy(), row) for row in lengths]


def predict_crack(params, law, cycles):
    return predict_crack_batch([params], law, cycles)[0]


def _params_matrix(params_batch):
    if isinstance(params_batch, np.ndarray):
        theta = np.atleast_2d(np.asarray(params_batch, dtype=float))
    else:
        params_batch = list(params_batch)
        if not params_batch:
            raise ValueError("empty parameter batch")
        theta = np.array([p.as_array() for p in params_batch])
    if theta.shape[0] == 0:
        raise ValueError("empty parameter batch")
    bad = ~np.all(np.isfinite(theta[:, :2]), axis=1)
    if bad.any():
        raise ValueError(f"non-finite parameters at batch index {int(np.flatnonzero(bad)[0])}")
    return theta


def failure_cycles(theta, law):
    """Failure cycle for each row of ``theta`` (columns log10_alpha, beta).

    Returns ``(cycles, failed)``: an int64 array and a boolean mask. Rows that
    do not fail within ``law.horizon`` report the horizon (rounded up) with
    ``failed`` False.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    la, beta = theta[:, 0], theta[:, 1]
    c = 1.0 - beta
    log_ratio = np.log(law.a_fail / law.a0)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        safe_c = np.where(c == 0.0, 1.0, c)
        t_fail = np.where(c == 0.0, log_ratio, np.expm1(c * log_ratio) / safe_c)
        n_fail = t_fail / ((10.0 ** la) * law.a0 ** (beta - 1.0))
    n = np.ceil(np.where(np.isfinite(n_fail), n_fail, np.inf))
    finite = np.isfinite(n)
    n = np.where(finite, np.maximum(n, 0.0), 0.0)
    # rounding in the inversion can leave n one cycle off; settle it against
    # the forward model so the crossing is exact
    for _ in range(4):
        at_n = crack_lengths(la, beta, n, law)
        before = crack_lengths(la, beta, np.maximum(n - 1.0, 0.0), law)
        up = finite & (at_n < law.a_fail)
        down = finite & (n > 0) & (before >= law.a_fail)
        if not (up.any() or down.any()):
            break
        n = n + up - down
    failed = finite.copy()
    if law.horizon is not None:
        failed &= n <= law.horizon
        n = np.where(failed, n, np.ceil(law.horizon))
    else:
        n = np.where(failed, n, 0.0)
    return n.astype(np.int64), failed


def failure_cycle(params, law):
    """Smallest integer cycle at which the crack reaches ``law.a_fail``."""
    if not params.alpha > 0:
        raise NoFailureError("non-positive growth coefficient")
    n, failed = failure_cycles(params.as_array()[None, :], law)
    if not failed[0]:
        raise NoFailureError(f"no failure within horizon {law.horizon} for {params}")
    return int(n[0])


def _rk4_kernel(alpha, beta, a0, a_fail, h, substeps, n_report):
    out = np.empty(n_report + 1)
    a = a0
    out[0] = a
    for i in range(1, n_report + 1):
        for _ in range(substeps):
            if a >= a_fail:
                break
            k1 = alpha * a ** beta
            k2 = alpha * (a + 0.5 * h * k1) ** beta
            k3 = alpha * (a + 0.5 * h * k2) ** beta
            k4 = alpha * (a + h * k3) ** beta
            a = a + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not a < 1e300:
                a = a_fail
        if a >= a_fail:
            a = a_fail
        out[i] = a
    return out


_rk4_compiled = None


def _rk4(*args):
    global _rk4_compiled
    if _rk4_compiled is None:
        import numba

        _rk4_compiled = numba.njit(_rk4_kernel)
    return _rk4_compiled(*args)


def integrate_numeric(params, law, n_max, substeps=1):
    """Classical RK4 integration of the growth law.

    The step is ``law.cycle_step / substeps`` cycles; lengths are reported at
    every multiple of ``law.cycle_step`` from 0 to ``n_max``. Used as an
    independent check on the closed form.
    """
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    step = int(law.cycle_step)
    n_report = int(n_max) // step
    h = step / substeps
    lengths = _rk4(float(params.alpha), float(params.beta), float(law.a0),
                   float(law.a_fail), float(h), int(substeps), n_report)
    cycles = np.arange(n_report + 1, dtype=float) * step
    return CrackTrajectory(cycles, lengths)
