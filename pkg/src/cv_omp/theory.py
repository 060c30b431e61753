"""Gaussian approximation theory for cross-validation residuals.

With i.i.d. variance-1/m entries in the CV block, the CV residual of a fixed
estimate concentrates around (m_cv/m) times its generalized recovery error
(recovery error plus noise power), with an explicit variance.  Everything
here is closed form: distributions of CV residuals and their differences,
confidence intervals mapping CV residuals to recovery errors, success odds
for comparing two candidates, and worst-case error-ratio bounds driven by
restricted isometry constants.

Probabilities use an own erf/erfc (power series below 1, continued fraction
above), accurate to ~1e-15 and tested against math.erf.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
import math

import numpy as np

_SQRT_PI = math.sqrt(math.pi)
_SQRT_2 = math.sqrt(2.0)


class InfeasibleConfidenceError(ValueError):
    """Requested confidence multiplier is out of range for this CV size."""


class UndefinedBoundError(ValueError):
    """A bound's defining constants are unavailable or out of range."""


class UndefinedCorrelationError(ValueError):
    """Correlation of two exactly-zero error vectors is undefined."""


class DegenerateDistributionError(ValueError):
    """A zero-variance approximation where a spread is required."""


# ---------------------------------------------------------------------------
# error function

def _erf_series(x: float) -> float:
    # erf(x) = 2/sqrt(pi) * sum_n (-1)^n x^(2n+1) / (n! (2n+1)), fast for |x| < 1
    term = x
    total = x
    xx = x * x
    n = 0
    while True:
        n += 1
        term *= -xx / n
        delta = term / (2 * n + 1)
        total += delta
        if abs(delta) <= 1e-17 * abs(total) or n > 200:
            return (2.0 / _SQRT_PI) * total


def _erfc_cf(x: float) -> float:
    # erfc(x) = exp(-x^2)/sqrt(pi) / (x + (1/2)/(x + (2/2)/(x + (3/2)/(x + ...))))
    # evaluated by the modified Lentz recurrence; used for x >= 1
    tiny = 1e-300
    f = x
    c = f
    d = 0.0
    for n in range(1, 400):
        a = 0.5 * n
        d = x + a * d
        if d == 0.0:
            d = tiny
        c = x + a / c
        if c == 0.0:
            c = tiny
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    return math.exp(-x * x) / _SQRT_PI / f


def erf(x) -> float:
    x = float(x)
    if math.isnan(x):
        return x
    ax = abs(x)
    if ax < 1.0:
        return _erf_series(x)
    val = 1.0 - _erfc_cf(ax)
    return val if x > 0 else -val


def erfc(x) -> float:
    x = float(x)
    if math.isnan(x):
        return x
    if x < 0.0:
        return 2.0 - erfc(-x)
    if x < 1.0:
        return 1.0 - _erf_series(x)
    return _erfc_cf(x)


def phi(z) -> float:
    """Standard normal CDF."""
    return 0.5 * erfc(-float(z) / _SQRT_2)


# ---------------------------------------------------------------------------
# distributions of CV residuals

@dataclass(frozen=True)
class GaussianApprox:
    """Normal approximation by mean and variance."""

    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be nonnegative")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def _check_sizes(m: int, m_cv: int):
    if m <= 0 or m_cv <= 0:
        raise ValueError("m and m_cv must be positive")


def cv_residual_distribution(eps_x: float, sigma_n: float, m: int, m_cv: int) -> GaussianApprox:
    """Distribution of the CV residual of a fixed estimate with recovery error eps_x."""
    _check_sizes(m, m_cv)
    if eps_x < 0 or sigma_n < 0:
        raise ValueError("eps_x and sigma_n must be nonnegative")
    e = eps_x + sigma_n ** 2
    return GaussianApprox(mean=m_cv / m * e, variance=2.0 * m_cv / m ** 2 * e * e)


@dataclass(frozen=True)
class GeneralizedErrorPair:
    """Two generalized recovery errors (error plus noise power) and the
    correlation of their error vectors with the noise coordinate appended."""

    err_p: float
    err_q: float
    rho: float

    def __post_init__(self):
        if self.err_p < 0 or self.err_q < 0:
            raise ValueError("generalized errors must be nonnegative")
        if abs(self.rho) > 1.0 + 1e-9:
            raise ValueError(f"correlation {self.rho} outside [-1, 1]")
        object.__setattr__(self, "rho", float(min(1.0, max(-1.0, self.rho))))


def generalized_error_pair(x: np.ndarray, x_hat_p: np.ndarray, x_hat_q: np.ndarray,
                           sigma_n: float) -> GeneralizedErrorPair:
    """Build the error pair of two estimates of the same signal."""
    dp = np.asarray(x, dtype=float) - np.asarray(x_hat_p, dtype=float)
    dq = np.asarray(x, dtype=float) - np.asarray(x_hat_q, dtype=float)
    s2 = float(sigma_n) ** 2
    ep = float(dp @ dp) + s2
    eq = float(dq @ dq) + s2
    denom = math.sqrt(ep * eq)
    if denom == 0.0:
        raise UndefinedCorrelationError("both error vectors are exactly zero and sigma_n = 0")
    rho = (float(dp @ dq) + s2) / denom
    return GeneralizedErrorPair(err_p=ep, err_q=eq, rho=rho)


def cv_diff_distribution(pair: GeneralizedErrorPair, m: int, m_cv: int) -> GaussianApprox:
    """Distribution of the difference of the two CV residuals on one shared block."""
    _check_sizes(m, m_cv)
    ep, eq, rho = pair.err_p, pair.err_q, pair.rho
    mean = m_cv / m * (ep - eq)
    variance = 2.0 * m_cv / m ** 2 * (ep * ep + eq * eq - 2.0 * rho * rho * ep * eq)
    return GaussianApprox(mean=mean, variance=max(variance, 0.0))


def generalized_cv_distribution(delta_x: np.ndarray, sigma_n: float, m: int, m_cv: int,
                                entry_sq_variance: float) -> GaussianApprox:
    """CV residual distribution for an arbitrary variance-1/m entry ensemble.

    entry_sq_variance is the variance of a squared matrix entry (2/m^2 for
    gaussian entries, exactly 0 for rademacher); the gaussian value reproduces
    cv_residual_distribution.  Noise stays gaussian.
    """
    _check_sizes(m, m_cv)
    if sigma_n < 0 or entry_sq_variance < 0:
        raise ValueError("sigma_n and entry_sq_variance must be nonnegative")
    dx = np.asarray(delta_x, dtype=float)
    e = float(dx @ dx) + float(sigma_n) ** 2
    quartic = float(np.sum(dx ** 4))
    correction = (m ** 2 * entry_sq_variance / 2.0 - 1.0) * quartic
    variance = 2.0 * m_cv / m ** 2 * (e * e + correction)
    return GaussianApprox(mean=m_cv / m * e, variance=max(variance, 0.0))


def generalized_cv_diff_distribution(delta_x_p: np.ndarray, delta_x_q: np.ndarray,
                                     sigma_n: float, m: int, m_cv: int,
                                     entry_sq_variance: float) -> GaussianApprox:
    """Difference-of-CV-residuals distribution for an arbitrary entry ensemble."""
    _check_sizes(m, m_cv)
    if sigma_n < 0 or entry_sq_variance < 0:
        raise ValueError("sigma_n and entry_sq_variance must be nonnegative")
    dp = np.asarray(delta_x_p, dtype=float)
    dq = np.asarray(delta_x_q, dtype=float)
    s2 = float(sigma_n) ** 2
    ep = float(dp @ dp) + s2
    eq = float(dq @ dq) + s2
    cross = float(dp @ dq) + s2
    quartic = float(np.sum((dp ** 2 - dq ** 2) ** 2))
    correction = (m ** 2 * entry_sq_variance / 2.0 - 1.0) * quartic
    variance = 2.0 * m_cv / m ** 2 * (ep * ep + eq * eq - 2.0 * cross * cross + correction)
    return GaussianApprox(mean=m_cv / m * (ep - eq), variance=max(variance, 0.0))


# ---------------------------------------------------------------------------
# estimation: CV residual -> recovery error interval

@dataclass(frozen=True)
class EstimationInterval:
    lower: float
    upper: float
    confidence: float
    z: float


def interval_scale_factors(z: float, m: int, m_cv: int):
    """Factors mapping a CV residual to recovery-error bounds.

    Returns (lower_scale, upper_scale): with confidence erf(z/sqrt 2) the
    recovery error plus noise power lies in [lower_scale, upper_scale] times
    the CV residual.  Needs z * sqrt(2/m_cv) < 1 for the upper factor.
    """
    _check_sizes(m, m_cv)
    if z < 0:
        raise ValueError("z must be nonnegative")
    spread = z * math.sqrt(2.0 / m_cv)
    if 1.0 - spread <= 0.0:
        raise InfeasibleConfidenceError(
            f"z={z} needs z*sqrt(2/m_cv) < 1, got {spread:.4f} at m_cv={m_cv}")
    base = m / m_cv
    return base / (1.0 + spread), base / (1.0 - spread)


def estimation_interval(eps_cv: float, z: float, m: int, m_cv: int,
                        noise_power: float = 0.0) -> EstimationInterval:
    """Two-sided recovery error interval from one CV residual.

    noise_power is sigma_n^2 (or an estimate of it); the lower bound is
    clamped at zero since recovery errors cannot be negative.
    """
    if eps_cv < 0:
        raise ValueError("eps_cv must be nonnegative")
    lower_scale, upper_scale = interval_scale_factors(z, m, m_cv)
    return EstimationInterval(
        lower=max(lower_scale * eps_cv - noise_power, 0.0),
        upper=upper_scale * eps_cv - noise_power,
        confidence=erf(z / _SQRT_2),
        z=float(z),
    )


# ---------------------------------------------------------------------------
# comparison: picking the better of two candidates by CV residual

def comparison_success(pair: GeneralizedErrorPair, m_cv: int):
    """Odds that the worse candidate also shows the larger CV residual.

    Returns (z, probability) with probability = phi(z).  Requires
    err_p >= err_q > 0 (p the worse candidate).  Perfectly correlated errors
    have no cross term; equal errors with rho < 1 give a coin flip.
    """
    if m_cv <= 0:
        raise ValueError("m_cv must be positive")
    ep, eq, rho = pair.err_p, pair.err_q, pair.rho
    if not eq > 0:
        raise ValueError("err_q must be positive")
    if ep < eq:
        raise ValueError("need err_p >= err_q (p is the worse candidate)")
    if rho * rho >= 1.0:
        inv_z_sq = 2.0 / m_cv
    elif ep == eq:
        return 0.0, 0.5
    else:
        inv_z_sq = (2.0 / m_cv) * (1.0 + 2.0 * (1.0 - rho * rho) * ep * eq / (ep - eq) ** 2)
    z = 1.0 / math.sqrt(inv_z_sq)
    return z, phi(z)


def min_ratio_for_confidence(z0: float, m_cv: int, rho: float) -> float:
    """Smallest error ratio err_p/err_q at which comparison confidence reaches phi(z0)."""
    if abs(rho) > 1.0:
        raise ValueError("rho must lie in [-1, 1]")
    return worst_ratio_bound(z0, m_cv, 1.0 - rho * rho)


def worst_ratio_bound(z0: float, m_cv: int, decorrelation: float) -> float:
    """Error-ratio threshold from a decorrelation level (1 - rho^2).

    Ratios at or above the returned value are detected by the CV comparison
    with probability at least phi(z0).  Needs m_cv > 2 z0^2.
    """
    if m_cv <= 0:
        raise ValueError("m_cv must be positive")
    if z0 < 0:
        raise ValueError("z0 must be nonnegative")
    if not 0.0 <= decorrelation <= 1.0:
        raise ValueError("decorrelation must lie in [0, 1]")
    if m_cv <= 2.0 * z0 * z0:
        raise InfeasibleConfidenceError(
            f"need m_cv > 2*z0^2, got m_cv={m_cv}, z0={z0}")
    c0 = z0 * z0 * decorrelation / (m_cv - 2.0 * z0 * z0)
    return 2.0 * c0 + 1.0 + 2.0 * math.sqrt(c0 * c0 + c0)


# ---------------------------------------------------------------------------
# restricted-isometry driven bounds on pursuit iterates

def _delta_at(delta, subscript: int) -> float:
    if isinstance(delta, Mapping):
        if subscript not in delta:
            raise UndefinedBoundError(f"isometry constant for order {subscript} unavailable")
        val = float(delta[subscript])
    else:
        val = float(delta)
    if not 0.0 <= val:
        raise UndefinedBoundError(f"isometry constant for order {subscript} is negative")
    return val


def block_correction_bound(delta, p: int, q: int, missing: int) -> float:
    """Bound on the coefficient perturbation of columns added between
    iterations p and q, relative to the missing generalized energy.

    The perturbation of the newly added coefficient block, squared, is at most
    this factor times (energy of the still-missing true coefficients plus the
    noise power).  `missing` counts the true indices absent after iteration q;
    subscripts carry +1 because the noise direction rides along as an extra
    column.  delta is a uniform value or a map from support size to constant.
    """
    if not (q > p >= 1):
        raise ValueError("need q > p >= 1")
    if missing < 0:
        raise ValueError("missing must be nonnegative")
    d_step = _delta_at(delta, q - p)
    d_q = _delta_at(delta, q)
    d_p = _delta_at(delta, p)
    d_far = _delta_at(delta, missing + q - p + 1)
    d_near = _delta_at(delta, missing + p + 1)
    if d_p >= 1.0 or d_step >= 1.0:
        raise UndefinedBoundError("bound needs delta_p < 1 and delta_(q-p) < 1")
    if d_q >= 0.5:
        raise UndefinedBoundError("bound needs delta_q < 0.5")
    num = d_far ** 2 + (d_q * d_near / (1.0 - d_p)) ** 2
    den = (1.0 - d_step) ** 2 * (1.0 - (d_q / (1.0 - d_q)) ** 2)
    return num / den


@dataclass(frozen=True)
class RicBoundConstants:
    """Constants controlling how distinguishable pursuit iterates are.

    floor_quad and floor_const shape the correlation floor as a function of
    the missing signal-to-noise ratio; gap_linear and gap_const deflate the
    separating signal term.  rho_floor lower-bounds the correlation between
    consecutive iterate errors and decorrelation is 1 - rho_floor^2.
    """

    floor_quad: float
    floor_const: float
    gap_linear: float
    gap_const: float
    rho_floor: float
    decorrelation: float
    eta: float


def ric_bound_constants(delta, eta: float, *, k: int | None = None,
                        p: int | None = None, o: int | None = None) -> RicBoundConstants:
    """Derive the iterate-separation constants from isometry constants.

    delta may be a single uniform value (subscripts then irrelevant) or a map
    from support size to constant, in which case the sparsity k, the worse
    iteration p and the reference iteration o select the subscripts.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    uniform = not isinstance(delta, Mapping)
    if not uniform and (k is None or p is None or o is None):
        raise ValueError("subscripts k, p, o required with a non-uniform delta map")
    if uniform:
        k = p = o = 1  # placeholder; all lookups hit the same value
        at = lambda _s: _delta_at(delta, _s)
    else:
        at = lambda _s: _delta_at(delta, _s)
    d_p = at(p)
    if d_p >= 1.0:
        raise UndefinedBoundError("constants need delta_p < 1")
    r = at(k + 1) / (1.0 - d_p)
    s = at(o) / (1.0 - d_p)
    floor_quad = 2.0 * ((1.0 + r * r) ** 2 * eta + (1.0 + r * r) * r * r + (1.0 + s * s))
    floor_const = 2.0 * ((1.0 + r * r) * r * r * eta + r ** 4 + (1.0 + s * s) * eta)
    gap_linear = 2.0 * at(o) * at(p + 1) / (1.0 - d_p) ** 2
    gap_const = (1.0 + s * s) * eta + gap_linear * math.sqrt(eta)
    t1 = at(p + 1) / (1.0 - d_p)
    t2 = at(o + 1) / (1.0 - d_p)
    rho_floor = (1.0 - t1 * t2 * math.sqrt(eta)) / math.sqrt(
        (1.0 + t1 * t1) * (1.0 + t2 * t2 + eta))
    return RicBoundConstants(
        floor_quad=floor_quad, floor_const=floor_const,
        gap_linear=gap_linear, gap_const=gap_const,
        rho_floor=rho_floor, decorrelation=1.0 - rho_floor ** 2, eta=float(eta))


def correlation_floor(snr: float, consts: RicBoundConstants) -> float:
    """Floor g(snr) in (0, 1] on the squared iterate correlation; snr is the
    missing signal amplitude over the noise scale.  snr = 0 gives 1."""
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    num = consts.floor_quad * snr * snr + consts.floor_const
    gap = max(snr * snr - consts.gap_linear * snr - consts.gap_const, 0.0) ** 2
    if num == 0.0 and gap == 0.0:
        return 1.0
    return num / (num + gap)


def separation_z(snr: float, m_cv: int, consts: RicBoundConstants) -> float:
    """Guaranteed comparison score between an iterate missing snr worth of
    signal and the best iterate: z >= sqrt(m_cv/2) * sqrt(1 - g(snr))."""
    if m_cv <= 0:
        raise ValueError("m_cv must be positive")
    g = correlation_floor(snr, consts)
    return math.sqrt(m_cv / 2.0) * math.sqrt(max(1.0 - g, 0.0))
