"""Restricted isometry diagnostics for explicit matrices.

Estimates restricted isometry constants (RICs) by direct enumeration of
column supports, either exhaustively or by random sampling, and checks
the standard consequences used in the recovery analysis: norm
equivalence on a support, near-orthogonality of disjoint column blocks,
pseudo-inverse and orthogonal-projection bounds, and the coefficient
correction bound for blocks added between two stages of a greedy solve.

All checks here operate on a concrete matrix, so the reported constants
are properties of that realization and not of the random ensemble.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .solver import least_squares_on_support
from .theory import UndefinedBoundError, block_correction_bound

# Hard limit on exhaustive support enumeration.  C(n, k) above this is
# refused in exhaustive mode and falls back to sampling in auto mode.
EXHAUSTIVE_CAP = 200_000

# Supports are processed in batches of this size to bound memory.
_CHUNK = 20_000

# Relative slack below which an inequality counts as violated.  Bounds
# are exact in real arithmetic, so anything beyond roundoff is real.
SLACK_RTOL = 1e-10


class ExhaustiveCapError(ValueError):
    """Exhaustive enumeration would exceed the support cap."""


@dataclass(frozen=True)
class RicEstimate:
    """RIC of one order for a concrete matrix.

    ``delta`` is exact when ``mode == "exhaustive"`` and a lower bound
    (a max over sampled supports) when ``mode == "sampled"``.
    """

    order: int
    delta: float
    mode: str
    supports_checked: int


def _chunked_combinations(n: int, k: int, chunk: int = _CHUNK):
    """Yield index arrays of shape (<=chunk, k) covering all k-subsets."""
    it = itertools.combinations(range(n), k)
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        yield np.asarray(block, dtype=np.intp)


def _max_gram_deviation(gram: np.ndarray, supports: np.ndarray) -> float:
    """Largest |eigenvalue - 1| over the Gram submatrices in supports."""
    sub = gram[supports[:, :, None], supports[:, None, :]]
    evals = np.linalg.eigvalsh(sub)
    return float(np.max(np.abs(evals - 1.0)))


def _sampled_supports(rng, n: int, k: int, samples: int) -> np.ndarray:
    if k >= n:
        return np.tile(np.arange(n, dtype=np.intp), (samples, 1))
    keys = rng.random((samples, n))
    return np.argpartition(keys, k, axis=1)[:, :k].astype(np.intp)


def estimate_ric(a, order: int, mode: str = "auto", samples: int = 2000,
                 seed: int = 0, cap: int = EXHAUSTIVE_CAP) -> RicEstimate:
    """Estimate the order-``order`` RIC of the matrix ``a``.

    mode "exhaustive" enumerates every support of the given size and is
    exact; it raises ExhaustiveCapError when C(n, order) exceeds ``cap``.
    mode "sampled" takes the max over ``samples`` random supports and
    therefore underestimates.  "auto" picks exhaustive when it fits.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("matrix must be two dimensional")
    n = a.shape[1]
    if not 1 <= order <= n:
        raise ValueError(f"order must be in [1, {n}], got {order}")
    if mode not in ("auto", "exhaustive", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")
    total = math.comb(n, order)
    if mode == "auto":
        mode = "exhaustive" if total <= cap else "sampled"
    gram = a.T @ a
    if mode == "exhaustive":
        if total > cap:
            raise ExhaustiveCapError(
                f"C({n}, {order}) = {total} supports exceeds cap {cap}; "
                "use sampled mode")
        worst = 0.0
        checked = 0
        for block in _chunked_combinations(n, order):
            worst = max(worst, _max_gram_deviation(gram, block))
            checked += len(block)
        return RicEstimate(order, worst, "exhaustive", checked)
    rng = np.random.default_rng(seed)
    worst = 0.0
    checked = 0
    remaining = samples
    while remaining > 0:
        count = min(remaining, _CHUNK)
        supports = _sampled_supports(rng, n, order, count)
        worst = max(worst, _max_gram_deviation(gram, supports))
        checked += count
        remaining -= count
    return RicEstimate(order, worst, "sampled", checked)


def ric_profile(a, max_order: int, **kwargs) -> tuple[RicEstimate, ...]:
    """RIC estimates for every order from 1 to ``max_order``."""
    return tuple(estimate_ric(a, j, **kwargs) for j in range(1, max_order + 1))


def delta_map(estimates: Sequence[RicEstimate]) -> dict[int, float]:
    """Order -> delta mapping, as consumed by block_correction_bound."""
    return {e.order: e.delta for e in estimates}


# ---------------------------------------------------------------------------
# Consequence checks.
#
# Each named check tests one inequality of the form lhs <= rhs, where the
# rhs constant is built from the supplied RICs.  A check is skipped on a
# draw when its constant is undefined there (a square root of a negative
# number or a non-invertible Gram), which happens once the RICs reach 1
# or, for the projection lower bound, 1/2.

CHECK_NAMES = (
    "norm_upper",
    "norm_lower",
    "gram_upper",
    "gram_lower",
    "gram_inverse_upper",
    "gram_inverse_lower",
    "cross_operator",
    "cross_vector",
    "pseudo_inverse",
    "projection_upper",
    "projection_lower",
)


@dataclass(frozen=True)
class CheckSummary:
    name: str
    attempted: int
    checked: int
    skipped: int
    violations: int
    min_slack: float
    max_slack: float


@dataclass(frozen=True)
class ConsequenceReport:
    deltas: tuple[float, ...]
    trials: int
    seed: int
    checks: tuple[CheckSummary, ...]

    def check(self, name: str) -> CheckSummary:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def total_violations(self) -> int:
        return sum(c.violations for c in self.checks)


class _Tally:
    """Accumulates one inequality check across draws."""

    def __init__(self, name):
        self.name = name
        self.attempted = 0
        self.checked = 0
        self.violations = 0
        self.min_slack = math.inf
        self.max_slack = -math.inf

    def skip(self):
        self.attempted += 1

    def score(self, lhs, rhs):
        self.attempted += 1
        self.checked += 1
        slack = rhs - lhs
        if slack < self.min_slack:
            self.min_slack = slack
        if slack > self.max_slack:
            self.max_slack = slack
        if slack < -SLACK_RTOL * max(1.0, abs(rhs)):
            self.violations += 1

    def summary(self):
        return CheckSummary(self.name, self.attempted, self.checked,
                            self.attempted - self.checked, self.violations,
                            self.min_slack, self.max_slack)


def check_ric_consequences(a, deltas: Sequence[float], trials: int = 1000,
                           seed: int = 0) -> ConsequenceReport:
    """Test the RIC consequence inequalities on random (S, T, x) draws.

    ``deltas`` must contain the RICs of orders 1..len(deltas) of ``a``
    (exact values, or the checks may fail spuriously).  Each draw picks
    disjoint supports S and T with |S| + |T| <= len(deltas) and a
    standard normal coefficient vector on T, then scores every
    inequality whose constant is defined for that draw.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[1]
    deltas = tuple(float(d) for d in deltas)
    max_order = len(deltas)
    if max_order < 2:
        raise ValueError("need RICs up to order 2 at least")
    rng = np.random.default_rng(seed)
    sizes = [(s, t) for s in range(1, max_order)
             for t in range(1, max_order) if s + t <= max_order]
    tallies = {name: _Tally(name) for name in CHECK_NAMES}

    for _ in range(trials):
        s, t = sizes[rng.integers(len(sizes))]
        perm = rng.permutation(n)
        cols_s = perm[:s]
        cols_t = perm[s:s + t]
        x = rng.standard_normal(t)
        x_norm = float(np.linalg.norm(x))
        a_s = a[:, cols_s]
        a_t = a[:, cols_t]
        atx = a_t @ x
        atx_norm = float(np.linalg.norm(atx))
        d_t = deltas[t - 1]
        d_s = deltas[s - 1]
        d_st = deltas[s + t - 1]

        tallies["norm_upper"].score(atx_norm, math.sqrt(1.0 + d_t) * x_norm)
        if d_t <= 1.0:
            tallies["norm_lower"].score(math.sqrt(1.0 - d_t) * x_norm,
                                        atx_norm)
        else:
            tallies["norm_lower"].skip()

        gram_t = a_t.T @ a_t
        gx_norm = float(np.linalg.norm(gram_t @ x))
        tallies["gram_upper"].score(gx_norm, (1.0 + d_t) * x_norm)
        tallies["gram_lower"].score((1.0 - d_t) * x_norm, gx_norm)

        if d_t < 1.0:
            inv_x = np.linalg.solve(gram_t, x)
            inv_norm = float(np.linalg.norm(inv_x))
            tallies["gram_inverse_upper"].score(inv_norm,
                                                x_norm / (1.0 - d_t))
            tallies["gram_inverse_lower"].score(x_norm / (1.0 + d_t),
                                                inv_norm)
        else:
            tallies["gram_inverse_upper"].skip()
            tallies["gram_inverse_lower"].skip()

        cross = a_s.T @ a_t
        top_sv = float(np.linalg.svd(cross, compute_uv=False)[0])
        tallies["cross_operator"].score(top_sv, d_st)
        tallies["cross_vector"].score(float(np.linalg.norm(cross @ x)),
                                      d_st * x_norm)

        coef = np.linalg.lstsq(a_s, atx, rcond=None)[0]
        resid = atx - a_s @ coef
        resid_norm = float(np.linalg.norm(resid))
        if d_st < 1.0:
            tallies["pseudo_inverse"].score(float(np.linalg.norm(coef)),
                                            d_st / (1.0 - d_s) * x_norm)
        else:
            tallies["pseudo_inverse"].skip()

        tallies["projection_upper"].score(resid_norm, atx_norm)
        ratio = d_st / (1.0 - d_st) if d_st < 1.0 else math.inf
        if ratio <= 1.0:
            tallies["projection_lower"].score(
                math.sqrt(1.0 - ratio * ratio) * atx_norm, resid_norm)
        else:
            tallies["projection_lower"].skip()

    return ConsequenceReport(deltas, trials, seed,
                             tuple(tallies[name].summary()
                                   for name in CHECK_NAMES))


# ---------------------------------------------------------------------------
# Correction bound check.
#
# On instances y = A x + sigma_n * noise_dir with a 2-sparse signal, run
# two greedy selection steps and compare the squared coefficient error
# on the second selected atom against the correction bound evaluated
# with the RICs of the extended matrix [A, noise_dir].  The noise
# direction enters as one extra column with coefficient sigma_n, which
# is where the +1 in the bound's subscripts comes from.


@dataclass(frozen=True)
class CorrectionCheckResult:
    trials: int
    attempted: int
    skipped_undefined: int
    violations: int
    worst_ratio: float
    min_slack: float


def _noise_column_deviation(gram_b, n, combos_by_order):
    """Max Gram deviation over supports that include the last column."""
    worst = {}
    for order, combos in combos_by_order.items():
        padded = np.hstack([combos,
                            np.full((len(combos), 1), n, dtype=np.intp)])
        worst[order] = _max_gram_deviation(gram_b, padded)
    return worst


def check_correction_bound(trials: int = 200, m: int = 256, n: int = 27,
                           k: int = 2, sigma_n: float = 0.1, seed: int = 0,
                           max_order: int = 4) -> CorrectionCheckResult:
    """Empirically test the block coefficient correction bound.

    Uses one fixed Gaussian matrix and fresh (signal, noise) draws per
    instance.  Stage indices are p=1, q=2, so the checked block is the
    single atom picked in the second greedy step and the bound needs
    RICs up to order k + 2 of the extended matrix.  Instances where the
    bound is undefined (an RIC of the extension reaches 1/2) are
    counted and skipped.
    """
    if max_order < k + 2:
        raise ValueError("need RICs up to order k + 2 for the bound")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, n)) / math.sqrt(m)
    gram_a = a.T @ a

    # RICs of A itself, exact; supports without the noise column reduce
    # to submatrices of gram_a, so these are reused for every instance.
    base = [estimate_ric(a, j, mode="exhaustive").delta
            for j in range(1, max_order + 1)]
    combos_by_order = {}
    for j in range(1, max_order + 1):
        rows = list(itertools.combinations(range(n), j - 1))
        combos_by_order[j] = np.asarray(rows, dtype=np.intp).reshape(
            len(rows), j - 1)

    gram_b = np.empty((n + 1, n + 1))
    gram_b[:n, :n] = gram_a

    valid = 0
    attempted = 0
    skipped = 0
    violations = 0
    worst_ratio = 0.0
    min_slack = math.inf
    max_attempts = 3 * trials

    while valid < trials and attempted < max_attempts:
        attempted += 1
        support = rng.choice(n, size=k, replace=False)
        x = np.zeros(n)
        x[support] = rng.standard_normal(k)
        noise_dir = rng.standard_normal(m) / math.sqrt(m)
        y = a @ x + sigma_n * noise_dir

        g_cross = a.T @ noise_dir
        gram_b[:n, n] = g_cross
        gram_b[n, :n] = g_cross
        gram_b[n, n] = noise_dir @ noise_dir
        noise_dev = _noise_column_deviation(gram_b, n, combos_by_order)
        deltas = {j: max(base[j - 1], noise_dev[j])
                  for j in range(1, max_order + 1)}

        # Two greedy steps.
        t1 = int(np.argmax(np.abs(a.T @ y)))
        first = least_squares_on_support(a, y, (t1,))
        corr = np.abs(a.T @ first.residual)
        corr[t1] = 0.0
        t2 = int(np.argmax(corr))
        second = least_squares_on_support(a, y, (t1, t2))

        missing = [j for j in support if j not in (t1, t2)]
        miss_energy = float(sum(x[j] ** 2 for j in missing))
        try:
            eta = block_correction_bound(deltas, p=1, q=2,
                                         missing=len(missing))
        except UndefinedBoundError:
            skipped += 1
            continue
        valid += 1
        lhs = float((second.coefficients[1] - x[t2]) ** 2)
        rhs = eta * (miss_energy + sigma_n ** 2)
        slack = rhs - lhs
        if slack < min_slack:
            min_slack = slack
        if rhs > 0 and lhs / rhs > worst_ratio:
            worst_ratio = lhs / rhs
        if slack < -SLACK_RTOL * max(1.0, rhs):
            violations += 1

    return CorrectionCheckResult(valid, attempted, skipped, violations,
                                 worst_ratio, min_slack)
