"""Restricted isometry estimation and empirical inequality checks."""
import itertools

import numpy as np
import pytest

from cv_omp import rip


def _brute_force_ric(a, order):
    gram = a.T @ a
    worst = 0.0
    for combo in itertools.combinations(range(a.shape[1]), order):
        sub = gram[np.ix_(combo, combo)]
        ev = np.linalg.eigvalsh(sub)
        worst = max(worst, float(np.max(np.abs(ev - 1.0))))
    return worst


def _orthonormal(m, n, seed=0):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((m, n)))
    return q


def test_exhaustive_matches_brute_force():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((10, 8)) / np.sqrt(10)
    for order in (1, 2, 3):
        est = rip.estimate_ric(a, order, mode="exhaustive")
        assert est.delta == pytest.approx(_brute_force_ric(a, order), rel=1e-12)
        assert est.mode == "exhaustive"
        assert est.supports_checked == {1: 8, 2: 28, 3: 56}[order]


def test_orthonormal_columns_have_zero_deviation():
    q = _orthonormal(40, 8, seed=2)
    for order in (1, 2, 4):
        est = rip.estimate_ric(q, order, mode="exhaustive")
        assert est.delta < 1e-12


def test_profile_is_monotone_in_order():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((40, 20)) / np.sqrt(40)
    prof = rip.ric_profile(a, 4, mode="exhaustive")
    deltas = [e.delta for e in prof]
    assert [e.order for e in prof] == [1, 2, 3, 4]
    assert all(b >= a_ for a_, b in zip(deltas, deltas[1:]))


def test_sampled_lower_bounds_exhaustive():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((20, 40)) / np.sqrt(20)
    exact = rip.estimate_ric(a, 2, mode="exhaustive")
    sampled = rip.estimate_ric(a, 2, mode="sampled", samples=200, seed=0)
    assert sampled.mode == "sampled"
    assert sampled.delta <= exact.delta + 1e-12
    # exhausting the support space recovers the exact value
    dense = rip.estimate_ric(a, 2, mode="sampled", samples=100_000, seed=0)
    assert dense.delta <= exact.delta + 1e-12
    assert dense.delta >= 0.95 * exact.delta


def test_sampled_is_deterministic_per_seed():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((15, 30)) / np.sqrt(15)
    e1 = rip.estimate_ric(a, 3, mode="sampled", samples=500, seed=9)
    e2 = rip.estimate_ric(a, 3, mode="sampled", samples=500, seed=9)
    assert e1.delta == e2.delta
    e3 = rip.estimate_ric(a, 3, mode="sampled", samples=500, seed=10)
    assert e3.delta != e1.delta


def test_cap_behavior():
    rng = np.random.default_rng(6)
    a = rng.standard_normal((12, 30)) / np.sqrt(12)
    with pytest.raises(rip.ExhaustiveCapError):
        rip.estimate_ric(a, 3, mode="exhaustive", cap=1000)  # C(30,3) = 4060
    auto = rip.estimate_ric(a, 3, mode="auto", cap=1000, samples=300)
    assert auto.mode == "sampled"
    small = rip.estimate_ric(a, 2, mode="auto", cap=1000)
    assert small.mode == "exhaustive"  # C(30,2) = 435 fits


def test_estimate_ric_validation():
    a = np.eye(5)
    with pytest.raises(ValueError):
        rip.estimate_ric(a, 0)
    with pytest.raises(ValueError):
        rip.estimate_ric(a, 6)
    with pytest.raises(ValueError):
        rip.estimate_ric(a, 2, mode="guess")
    with pytest.raises(ValueError):
        rip.estimate_ric(np.ones(5), 1)


def test_delta_map():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((30, 10)) / np.sqrt(30)
    prof = rip.ric_profile(a, 3, mode="exhaustive")
    dm = rip.delta_map(prof)
    assert set(dm) == {1, 2, 3}
    assert dm[2] == prof[1].delta


def test_consequences_on_orthonormal_matrix():
    q = _orthonormal(50, 10, seed=8)
    deltas = [e.delta for e in rip.ric_profile(q, 4, mode="exhaustive")]
    report = rip.check_ric_consequences(q, deltas, trials=200, seed=0)
    assert report.total_violations == 0
    for name in rip.CHECK_NAMES:
        c = report.check(name)
        assert c.attempted > 0
        assert c.checked == c.attempted  # tiny deltas keep every gate open
        assert c.violations == 0


def test_consequences_full_coverage_tall_matrix():
    # tall well-conditioned gaussian: delta_4 < 0.5 so every inequality,
    # including the projection lower bound, is live on every draw
    rng = np.random.default_rng(77)
    a = rng.standard_normal((256, 24)) / np.sqrt(256)
    prof = rip.ric_profile(a, 4, mode="exhaustive")
    deltas = [e.delta for e in prof]
    assert deltas[3] < 0.5
    report = rip.check_ric_consequences(a, deltas, trials=400, seed=1)
    assert report.total_violations == 0
    for name in rip.CHECK_NAMES:
        c = report.check(name)
        assert c.checked == c.attempted > 0
        assert c.min_slack > -1e-10


def test_consequences_skip_undefined_constants():
    # wide matrix: delta_2 > 1, so bounds needing small constants must be
    # skipped rather than scored
    rng = np.random.default_rng(9)
    a = rng.standard_normal((24, 48)) / np.sqrt(24)
    prof = rip.ric_profile(a, 4)
    deltas = [e.delta for e in prof]
    assert deltas[1] > 1.0
    report = rip.check_ric_consequences(a, deltas, trials=300, seed=2)
    assert report.total_violations == 0
    for name in ("pseudo_inverse", "projection_lower"):
        c = report.check(name)
        assert c.checked == 0
        assert c.skipped == c.attempted > 0
    # order-1 draws keep the norm bounds partially alive
    assert report.check("norm_upper").checked == report.check("norm_upper").attempted
    assert 0 < report.check("norm_lower").checked < report.check("norm_lower").attempted


def test_consequences_requires_two_orders():
    a = np.eye(4)
    with pytest.raises(ValueError):
        rip.check_ric_consequences(a, [0.1], trials=10)


def test_consequence_report_lookup():
    q = _orthonormal(20, 6, seed=10)
    deltas = [e.delta for e in rip.ric_profile(q, 2, mode="exhaustive")]
    report = rip.check_ric_consequences(q, deltas, trials=50, seed=3)
    with pytest.raises(KeyError):
        report.check("no_such_inequality")
    assert report.trials == 50
    assert len(report.checks) == len(rip.CHECK_NAMES)


def test_correction_bound_check_small_run():
    res = rip.check_correction_bound(trials=50, seed=0)
    assert res.trials == 50
    assert res.attempted == 50
    assert res.violations == 0
    assert res.worst_ratio < 1.0
    assert res.min_slack > 0.0
    assert res.skipped_undefined < 150  # attempts are capped at 3x trials


def test_correction_bound_check_deterministic():
    r1 = rip.check_correction_bound(trials=20, seed=5)
    r2 = rip.check_correction_bound(trials=20, seed=5)
    assert r1 == r2
