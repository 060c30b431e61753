"""CV residual distributions, intervals, comparisons, and isometry constants."""
import math

import numpy as np
import pytest

from cv_omp import theory
from cv_omp.theory import (
    GaussianApprox,
    GeneralizedErrorPair,
    InfeasibleConfidenceError,
    UndefinedBoundError,
    UndefinedCorrelationError,
)

ETA_01 = 0.012654320987654323   # uniform delta = 0.1, one-step correction
ETA_005 = 0.0027854724530624814


# ---------------------------------------------------------------------------
# scalar special functions

def test_erf_against_math():
    xs = np.concatenate([np.linspace(-6, 6, 241), [-0.5, 0.5, 1e-8, -1e-8, 0.0]])
    for x in xs:
        assert abs(theory.erf(x) - math.erf(x)) < 1e-13


def test_erfc_relative_accuracy():
    for x in (0.0, 0.3, 1.0, 2.5, 4.0, 6.0, 8.0, 10.0):
        ref = math.erfc(x)
        assert abs(theory.erfc(x) - ref) <= 1e-12 * ref
        assert abs(theory.erfc(-x) - math.erfc(-x)) < 1e-13


def test_erf_symmetry_and_limits():
    assert theory.erf(0.0) == 0.0
    for x in (0.7, 2.2, 5.0):
        assert theory.erf(-x) == -theory.erf(x)
        assert theory.erfc(-x) == pytest.approx(2.0 - theory.erfc(x), abs=1e-15)
    assert theory.erf(12.0) == 1.0


def test_phi_values():
    assert theory.phi(0.0) == 0.5
    assert theory.phi(4.0) == pytest.approx(0.9999683287581669, abs=1e-15)
    assert theory.phi(-1.0) == pytest.approx(1.0 - theory.phi(1.0), abs=1e-15)
    zs = np.linspace(-5, 5, 101)
    vals = [theory.phi(z) for z in zs]
    assert np.all(np.diff(vals) > 0)


# ---------------------------------------------------------------------------
# gaussian approximations of CV residuals

def test_gaussian_approx_validates():
    g = GaussianApprox(mean=1.0, variance=4.0)
    assert g.std == 2.0
    with pytest.raises(ValueError):
        GaussianApprox(mean=0.0, variance=-1e-12)


def test_cv_residual_distribution_basic():
    d = theory.cv_residual_distribution(1.0, 0.0, 100, 50)
    assert d.mean == pytest.approx(0.5)
    assert d.variance == pytest.approx(0.01)
    # noise enters through its power
    dn = theory.cv_residual_distribution(0.75, 0.5, 100, 50)
    assert dn.mean == pytest.approx(0.5)
    assert dn.variance == pytest.approx(0.01)
    z = theory.cv_residual_distribution(0.0, 0.0, 10, 5)
    assert z.mean == 0.0 and z.variance == 0.0
    with pytest.raises(ValueError):
        theory.cv_residual_distribution(-0.1, 0.0, 10, 5)
    with pytest.raises(ValueError):
        theory.cv_residual_distribution(0.1, 0.0, 10, 0)


def test_error_pair_validation():
    p = GeneralizedErrorPair(err_p=2.0, err_q=1.0, rho=1.0 + 5e-10)
    assert p.rho == 1.0  # tiny excursions clamp
    with pytest.raises(ValueError):
        GeneralizedErrorPair(err_p=2.0, err_q=1.0, rho=1.1)
    with pytest.raises(ValueError):
        GeneralizedErrorPair(err_p=-1.0, err_q=1.0, rho=0.0)


def test_generalized_error_pair_construction():
    x = np.array([1.0, 2.0, 0.0, 0.0])
    same = theory.generalized_error_pair(x, x + np.array([1.0, 0, 0, 0]),
                                         x + np.array([1.0, 0, 0, 0]), 0.0)
    assert same.rho == 1.0
    assert same.err_p == same.err_q == 1.0
    ortho = theory.generalized_error_pair(
        x, x + np.array([1.0, 0, 0, 0]), x + np.array([0, 0, 1.0, 0]), 0.0)
    assert ortho.rho == 0.0
    flipped = theory.generalized_error_pair(
        x, x + np.array([1.0, 0, 0, 0]), x - np.array([1.0, 0, 0, 0]), 0.0)
    assert flipped.rho == -1.0
    with pytest.raises(UndefinedCorrelationError):
        theory.generalized_error_pair(x, x, x, 0.0)
    # the noise coordinate rides along and pulls the correlation up
    noisy = theory.generalized_error_pair(
        x, x + np.array([1.0, 0, 0, 0]), x + np.array([0, 0, 1.0, 0]), 0.5)
    assert noisy.rho == pytest.approx(0.25 / 1.25)
    assert noisy.err_p == pytest.approx(1.25)


def test_cv_diff_distribution():
    pair = GeneralizedErrorPair(err_p=2.0, err_q=1.0, rho=0.0)
    d = theory.cv_diff_distribution(pair, 100, 50)
    assert d.mean == pytest.approx(0.5)
    assert d.variance == pytest.approx(2.0 * 50 / 1e4 * 5.0)
    # perfect correlation cancels the cross term down to (e_p - e_q)^2
    tight = theory.cv_diff_distribution(GeneralizedErrorPair(2.0, 1.0, 1.0), 100, 50)
    assert tight.variance == pytest.approx(2.0 * 50 / 1e4 * 1.0)
    assert tight.variance < d.variance


def test_generalized_matches_gaussian_case():
    rng = np.random.default_rng(0)
    m, m_cv = 80, 32
    dx = rng.standard_normal(12) * 0.3
    sigma = 0.2
    gen = theory.generalized_cv_distribution(dx, sigma, m, m_cv, 2.0 / m ** 2)
    ref = theory.cv_residual_distribution(float(dx @ dx), sigma, m, m_cv)
    assert gen.mean == ref.mean
    assert gen.variance == pytest.approx(ref.variance, rel=1e-14)

    dq = rng.standard_normal(12) * 0.2
    gend = theory.generalized_cv_diff_distribution(dx, dq, sigma, m, m_cv, 2.0 / m ** 2)
    pair = theory.generalized_error_pair(np.zeros(12), dx, dq, sigma)
    refd = theory.cv_diff_distribution(
        GeneralizedErrorPair(pair.err_p, pair.err_q, pair.rho), m, m_cv)
    # same formula up to which of p/q is larger; compare magnitudes
    assert abs(gend.mean) == pytest.approx(abs(refd.mean), rel=1e-12)
    assert gend.variance == pytest.approx(refd.variance, rel=1e-12)


def test_two_valued_ensemble_shrinks_variance():
    m, m_cv = 48, 24
    dx = np.zeros(10)
    dx[3] = 1.0
    gauss = theory.generalized_cv_distribution(dx, 0.0, m, m_cv, 2.0 / m ** 2)
    rade = theory.generalized_cv_distribution(dx, 0.0, m, m_cv, 0.0)
    assert rade.mean == gauss.mean
    # all energy in one coordinate: the squared-entry spread is the only
    # fluctuation source, so the two-valued ensemble has zero variance
    assert rade.variance == 0.0
    assert gauss.variance > 0.0
    spread = np.full(4, 0.5)
    partial = theory.generalized_cv_distribution(spread, 0.0, m, m_cv, 0.0)
    ref = theory.generalized_cv_distribution(spread, 0.0, m, m_cv, 2.0 / m ** 2)
    assert 0.0 < partial.variance < ref.variance


# ---------------------------------------------------------------------------
# estimation interval

def test_interval_scale_factors_examples():
    lo, hi = theory.interval_scale_factors(2, 200, 50)
    assert lo == pytest.approx(2.857142857142857, abs=1e-12)
    assert hi == pytest.approx(6.666666666666667, abs=1e-12)
    lo, hi = theory.interval_scale_factors(3, 400, 80)
    assert lo == pytest.approx(3.391344199837052, abs=1e-12)
    assert hi == pytest.approx(9.51188160661456, abs=1e-12)


def test_interval_zero_z_collapses():
    lo, hi = theory.interval_scale_factors(0.0, 120, 30)
    assert lo == hi == pytest.approx(4.0)
    est = theory.estimation_interval(0.5, 0.0, 120, 30)
    assert est.lower == est.upper == pytest.approx(2.0)
    assert est.confidence == 0.0


def test_interval_infeasible_confidence():
    # z sqrt(2/m_cv) >= 1 leaves no upper bound
    with pytest.raises(InfeasibleConfidenceError):
        theory.interval_scale_factors(5.0, 100, 32)
    with pytest.raises(InfeasibleConfidenceError):
        theory.estimation_interval(1.0, 4.0, 100, 32)
    # boundary: z = sqrt(m_cv/2) exactly
    with pytest.raises(InfeasibleConfidenceError):
        theory.interval_scale_factors(4.0, 100, 32)


def test_interval_noise_power_shift_and_clamp():
    est = theory.estimation_interval(0.1, 3.0, 400, 80, noise_power=0.0)
    assert est.lower == pytest.approx(0.3391344199837052)
    assert est.upper == pytest.approx(0.951188160661456)
    assert est.confidence == pytest.approx(theory.erf(3.0 / math.sqrt(2.0)))
    shifted = theory.estimation_interval(0.1, 3.0, 400, 80, noise_power=0.01)
    assert shifted.lower == pytest.approx(est.lower - 0.01)
    assert shifted.upper == pytest.approx(est.upper - 0.01)
    clamped = theory.estimation_interval(0.1, 3.0, 400, 80, noise_power=1.0)
    assert clamped.lower == 0.0
    with pytest.raises(ValueError):
        theory.estimation_interval(-0.1, 3.0, 400, 80)


def test_interval_width_decreases_in_cv_rows():
    widths = []
    for m_cv in range(20, 200, 4):
        lo, hi = theory.interval_scale_factors(3.0, 400, m_cv)
        widths.append(hi - lo)
    assert np.all(np.diff(widths) < 0)


# ---------------------------------------------------------------------------
# comparison of two candidates

def test_comparison_success_examples():
    z, p = theory.comparison_success(GeneralizedErrorPair(2.0, 1.0, 0.0), 48)
    assert z == pytest.approx(2.1908902300206647, abs=1e-12)
    assert p == pytest.approx(0.9857701315418447, abs=1e-12)
    # fully correlated errors: the best detectable score
    z1, _ = theory.comparison_success(GeneralizedErrorPair(2.0, 1.0, 1.0), 48)
    assert z1 == pytest.approx(math.sqrt(24.0), abs=1e-12)
    zm, _ = theory.comparison_success(GeneralizedErrorPair(2.0, 1.0, -1.0), 48)
    assert zm == z1
    # equal errors that are not perfectly aligned: a fair coin
    z0, p0 = theory.comparison_success(GeneralizedErrorPair(1.0, 1.0, 0.3), 48)
    assert (z0, p0) == (0.0, 0.5)


def test_comparison_success_validation():
    with pytest.raises(ValueError):
        theory.comparison_success(GeneralizedErrorPair(2.0, 1.0, 0.0), 0)
    with pytest.raises(ValueError):
        theory.comparison_success(GeneralizedErrorPair(0.0, 0.0, 0.0), 48)
    with pytest.raises(ValueError):
        theory.comparison_success(GeneralizedErrorPair(1.0, 2.0, 0.0), 48)


def test_comparison_monotone_in_cv_rows_and_correlation():
    pair = GeneralizedErrorPair(3.0, 1.0, 0.5)
    probs = [theory.comparison_success(pair, m_cv)[1] for m_cv in range(8, 200, 8)]
    assert np.all(np.diff(probs) > 0)
    zs = [theory.comparison_success(GeneralizedErrorPair(3.0, 1.0, r), 48)[0]
          for r in np.linspace(0.0, 0.999, 40)]
    assert np.all(np.diff(zs) > 0)


def test_min_ratio_examples():
    assert theory.min_ratio_for_confidence(3.0, 50, 0.0) == pytest.approx(
        2.763085794518659, abs=1e-12)
    assert theory.worst_ratio_bound(4.0, 48, 0.0376) == pytest.approx(
        1.4702380234863475, abs=1e-12)
    # perfectly correlated iterates need no gap at all
    assert theory.min_ratio_for_confidence(3.0, 50, 1.0) == 1.0
    assert theory.worst_ratio_bound(3.0, 50, 0.0) == 1.0


def test_min_ratio_validation():
    with pytest.raises(InfeasibleConfidenceError):
        theory.worst_ratio_bound(5.0, 50, 0.5)   # m_cv = 2 z0^2 exactly
    with pytest.raises(InfeasibleConfidenceError):
        theory.worst_ratio_bound(6.0, 50, 0.5)
    with pytest.raises(ValueError):
        theory.worst_ratio_bound(3.0, 50, 1.5)
    with pytest.raises(ValueError):
        theory.worst_ratio_bound(-1.0, 50, 0.5)
    with pytest.raises(ValueError):
        theory.min_ratio_for_confidence(3.0, 50, 1.2)


def test_min_ratio_round_trips_through_comparison():
    # the threshold ratio run back through the comparison yields z0 again
    for z0 in (1.0, 2.0, 3.0, 3.9):
        for m_cv in (40, 48, 96, 250):
            for dec in (1.0, 0.5, 0.1, 0.0376):
                if m_cv <= 2 * z0 * z0:
                    continue
                ratio = theory.worst_ratio_bound(z0, m_cv, dec)
                rho = math.sqrt(1.0 - dec)
                pair = GeneralizedErrorPair(ratio, 1.0, rho)
                z, _ = theory.comparison_success(pair, m_cv)
                assert z == pytest.approx(z0, abs=1e-9)


# ---------------------------------------------------------------------------
# isometry-constant driven bounds

def test_block_correction_bound_values():
    assert theory.block_correction_bound(0.0, 1, 2, 0) == 0.0
    eta = theory.block_correction_bound(0.1, 1, 2, 0)
    assert eta == pytest.approx(ETA_01, abs=1e-15)
    assert eta <= 0.0127
    assert theory.block_correction_bound(0.05, 1, 2, 0) == pytest.approx(
        ETA_005, abs=1e-15)
    # more missing energy or a later pair never shrinks the uniform bound
    assert theory.block_correction_bound(0.1, 1, 2, 3) == pytest.approx(eta)


def test_block_correction_bound_subscript_routing():
    dmap = {1: 0.05, 2: 0.1, 3: 0.15, 4: 0.2, 5: 0.25}
    got = theory.block_correction_bound(dmap, 1, 3, 2)
    num = 0.25 ** 2 + (0.15 * 0.2 / (1 - 0.05)) ** 2
    den = (1 - 0.1) ** 2 * (1 - (0.15 / 0.85) ** 2)
    assert got == pytest.approx(num / den, rel=1e-14)
    with pytest.raises(UndefinedBoundError):
        theory.block_correction_bound({1: 0.05, 2: 0.1}, 1, 2, 3)  # order 5 missing


def test_block_correction_bound_preconditions():
    with pytest.raises(ValueError):
        theory.block_correction_bound(0.1, 2, 2, 0)
    with pytest.raises(ValueError):
        theory.block_correction_bound(0.1, 0, 1, 0)
    with pytest.raises(ValueError):
        theory.block_correction_bound(0.1, 1, 2, -1)
    with pytest.raises(UndefinedBoundError):
        theory.block_correction_bound(0.5, 1, 2, 0)
    with pytest.raises(UndefinedBoundError):
        theory.block_correction_bound(-0.1, 1, 2, 0)
    # per-order map can keep the early constants small but blow up later ones
    with pytest.raises(UndefinedBoundError):
        theory.block_correction_bound({1: 0.1, 2: 0.6, 3: 0.6}, 1, 2, 0)


def test_ric_bound_constants_perfect_isometry():
    c = theory.ric_bound_constants(0.0, 0.0)
    assert c.floor_quad == 2.0
    assert c.floor_const == 0.0
    assert c.gap_linear == 0.0
    assert c.gap_const == 0.0
    assert c.rho_floor == 1.0
    assert c.decorrelation == 0.0


def test_ric_bound_constants_at_tenth():
    c = theory.ric_bound_constants(0.1, ETA_01)
    assert c.floor_quad == pytest.approx(2.075624951782042, abs=1e-12)
    assert c.floor_const == pytest.approx(0.026242235732658943, abs=1e-12)
    assert c.gap_linear == pytest.approx(0.02469135802469136, abs=1e-12)
    assert c.gap_const == pytest.approx(0.01558811325380048, abs=1e-12)
    assert c.rho_floor == pytest.approx(0.9803250281919977, abs=1e-12)
    assert c.decorrelation == pytest.approx(0.038962839100358804, abs=1e-12)
    assert abs(c.floor_quad - 2.08) < 0.01
    assert abs(c.decorrelation - 0.0376) < 0.005


def test_ric_bound_constants_subscript_routing():
    dmap = {1: 0.05, 2: 0.08, 3: 0.1, 4: 0.12, 5: 0.15}
    c = theory.ric_bound_constants(dmap, 0.01, k=2, p=1, o=4)
    r = dmap[3] / (1 - dmap[1])
    s = dmap[4] / (1 - dmap[1])
    assert c.floor_quad == pytest.approx(
        2 * ((1 + r * r) ** 2 * 0.01 + (1 + r * r) * r * r + (1 + s * s)), rel=1e-13)
    assert c.gap_linear == pytest.approx(
        2 * dmap[4] * dmap[2] / (1 - dmap[1]) ** 2, rel=1e-13)
    t1 = dmap[2] / (1 - dmap[1])
    t2 = dmap[5] / (1 - dmap[1])
    assert c.rho_floor == pytest.approx(
        (1 - t1 * t2 * math.sqrt(0.01)) / math.sqrt((1 + t1 * t1) * (1 + t2 * t2 + 0.01)),
        rel=1e-13)
    with pytest.raises(ValueError):
        theory.ric_bound_constants(dmap, 0.01)   # missing subscripts
    with pytest.raises(ValueError):
        theory.ric_bound_constants(0.1, -0.5)
    with pytest.raises(UndefinedBoundError):
        theory.ric_bound_constants(1.0, 0.0)


def test_correlation_floor_shape():
    c = theory.ric_bound_constants(0.1, ETA_01)
    assert theory.correlation_floor(0.0, c) == 1.0
    g_half = theory.correlation_floor(0.5, c)
    g_one = theory.correlation_floor(1.0, c)
    g_two = theory.correlation_floor(2.0, c)
    assert 1.0 > g_half > g_one > g_two > 0.0
    with pytest.raises(ValueError):
        theory.correlation_floor(-0.1, c)
    # perfect isometry: no decorrelation at any snr below the gap threshold
    perfect = theory.ric_bound_constants(0.0, 0.0)
    assert theory.correlation_floor(0.0, perfect) == 1.0


def test_separation_score_examples():
    c = theory.ric_bound_constants(0.1, ETA_01)
    assert theory.separation_z(0.0, 48, c) == 0.0
    z1 = theory.separation_z(1.0, 48, c)
    assert 1.0 - theory.phi(z1) < 0.005
    z2 = theory.separation_z(2.0, 48, c)
    assert 1e-5 < 1.0 - theory.phi(z2) < 2e-4
    with pytest.raises(ValueError):
        theory.separation_z(1.0, 0, c)


def test_separation_score_never_exceeds_budget():
    c = theory.ric_bound_constants(0.1, ETA_01)
    cap = math.sqrt(48 / 2.0)
    for snr in np.linspace(0, 50, 60):
        assert theory.separation_z(float(snr), 48, c) <= cap + 1e-12


def test_resampled_cv_residuals_match_model():
    # direct monte carlo of the residual against the gaussian approximation:
    # sample mean within 5 standard errors, sample variance within a slack
    # factor of its own (chi-square inflated) standard error
    rng = np.random.default_rng(123)
    m, m_cv, reps = 96, 48, 20_000
    for trial in range(20):
        k = int(rng.integers(2, 7))
        dx = rng.standard_normal(k) * rng.uniform(0.2, 1.5)
        sigma = float(rng.uniform(0.0, 0.4))
        model = theory.cv_residual_distribution(float(dx @ dx), sigma, m, m_cv)
        g = rng.standard_normal((reps, m_cv, k)) / math.sqrt(m)
        noise = sigma * rng.standard_normal((reps, m_cv)) / math.sqrt(m)
        resid = g @ dx + noise
        eps = np.sum(resid * resid, axis=1)
        mean_se = model.std / math.sqrt(reps)
        assert abs(eps.mean() - model.mean) < 5 * mean_se
        var_se = model.variance * math.sqrt(2.0 / reps)
        assert abs(eps.var() - model.variance) < 10 * var_se
