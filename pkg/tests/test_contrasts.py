"""Odd test functions, the triple-sum statistic, exact means, and the theta scan."""

import math

import numpy as np
import pytest

from clusterbispec.contrasts import (
    EmptyWindowWarning,
    antisymmetrize,
    contrast_statistic,
    contrast_statistic_bruteforce,
    exact_mean,
    linearity_scan,
    quadrant_indicator,
    smooth_quadrant_bump,
)
from clusterbispec.cumulant3 import invert_bispectrum, odd_part
from clusterbispec.kernels import Exponential
from clusterbispec.match import MatchSpec, build_matched_kernel
from clusterbispec.simulate import EventSeries, ModelParams, simulate_window_batched

EXP_PARAMS = ModelParams(1.0, 0.5, 1.0, Exponential(1.0))


def random_series(rng, n, T=50.0, dup_frac=0.1):
    """Sorted times with a controlled fraction of exact duplicates."""
    times = rng.uniform(0.0, T, size=n)
    n_dup = int(dup_frac * n)
    if n_dup:
        times[:n_dup] = rng.choice(times[n_dup:], size=n_dup, replace=True)
    return EventSeries(np.sort(times), T, {"kind": "test"})


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------


def test_antisymmetrize_even_u_vanishes(rng):
    g = antisymmetrize(lambda a, b: a * a + np.cos(b), H=3.0)
    pts = rng.uniform(-3, 3, size=(100, 2))
    assert np.all(g.evaluate(pts[:, 0], pts[:, 1]) == 0.0)


def test_quadrant_indicator_values():
    g = quadrant_indicator(2.0)
    assert g.evaluate(np.array([0.5]), np.array([1.0]))[0] == 1.0
    assert g.evaluate(np.array([-0.5]), np.array([-1.0]))[0] == -1.0
    assert g.evaluate(np.array([0.5]), np.array([-1.0]))[0] == 0.0
    assert g.evaluate(np.array([2.5]), np.array([0.5]))[0] == 0.0  # outside box


def test_antisymmetrize_already_odd_doubles(rng):
    base = smooth_quadrant_bump(4.0)
    doubled = antisymmetrize(lambda a, b: base.evaluate(a, b), H=4.0)
    pts = rng.uniform(-4, 4, size=(200, 2))
    v1 = base.evaluate(pts[:, 0], pts[:, 1])
    v2 = doubled.evaluate(pts[:, 0], pts[:, 1])
    assert np.max(np.abs(v2 - 2.0 * v1)) < 1e-15


def test_odd_test_function_invariants(rng):
    for g in (smooth_quadrant_bump(4.0), quadrant_indicator(3.0)):
        pts = rng.uniform(-1.2 * g.support_radius, 1.2 * g.support_radius, size=(1000, 2))
        v = g.evaluate(pts[:, 0], pts[:, 1])
        v_neg = g.evaluate(-pts[:, 0], -pts[:, 1])
        assert np.max(np.abs(v + v_neg)) <= 1e-14       # jointly odd
        assert np.max(np.abs(v)) <= g.bound + 1e-15     # bounded
        outside = np.abs(pts).max(axis=1) > g.support_radius
        assert np.all(v[outside] == 0.0)                # compact support


# ---------------------------------------------------------------------------
# statistic
# ---------------------------------------------------------------------------


def test_statistic_needs_three_events():
    g = smooth_quadrant_bump(2.0)
    with pytest.warns(EmptyWindowWarning):
        assert contrast_statistic(EventSeries(np.array([0.1, 0.2]), 1.0), g) == 0.0


def test_pruned_equals_bruteforce(rng):
    # 20 series with n <= 200, duplicates included; equality is exact
    g = smooth_quadrant_bump(3.0)
    q = quadrant_indicator(2.0)
    for i in range(20):
        n = int(rng.integers(20, 201))
        series = random_series(rng, n, T=float(rng.uniform(20, 60)))
        for f in (g, q):
            assert contrast_statistic(series, f) == contrast_statistic_bruteforce(series, f)


def test_reflection_negates_exactly():
    # times on a dyadic grid so that T - x is exact and reflected lag pairs
    # are exact negations; the statistic must flip sign bit-for-bit
    rng = np.random.default_rng(5)
    T = 64.0
    times = np.sort(rng.integers(0, 64 * 1024, size=400).astype(float) / 1024.0)
    series = EventSeries(times, T, {"kind": "test"})
    reflected = EventSeries(np.sort(T - times), T, {"kind": "test"})
    g = smooth_quadrant_bump(3.0)
    a = contrast_statistic(series, g)
    b = contrast_statistic(reflected, g)
    assert a != 0.0
    assert b == -a


def test_scaling_g_scales_statistic(rng):
    series = random_series(rng, 150)
    base = smooth_quadrant_bump(3.0)
    for c in (2.0, 0.5):
        scaled = antisymmetrize(lambda a, b, c=c: 0.5 * c * base.evaluate(a, b), H=3.0)
        assert contrast_statistic(series, scaled) == c * contrast_statistic(series, base)
    grid = invert_bispectrum(EXP_PARAMS, 40.0, 256)
    odd = odd_part(grid)
    m_base = exact_mean(EXP_PARAMS, base, 100.0, odd)
    scaled = antisymmetrize(lambda a, b: 1.0 * base.evaluate(a, b), H=3.0)
    m2 = exact_mean(EXP_PARAMS, scaled, 100.0, odd)
    assert m2.mu_Tg == 2.0 * m_base.mu_Tg


def test_null_model_statistic_mean_zero():
    p0 = ModelParams(1.0, 0.5, 0.0, Exponential(1.0))
    g = smooth_quadrant_bump(4.0)
    rng = np.random.default_rng(17)
    vals = []
    for _ in range(200):
        times = simulate_window_batched(p0, 300.0, rng)
        vals.append(contrast_statistic(EventSeries(times, 300.0, {}), g))
    vals = np.asarray(vals)
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean()) < 4 * se


# ---------------------------------------------------------------------------
# exact means
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def exp_odd_grid():
    return odd_part(invert_bispectrum(EXP_PARAMS, half_width=40.0, n=512))


def test_exact_mean_linear_in_theta(exp_odd_grid):
    g = smooth_quadrant_bump(4.0)
    m_plus = exact_mean(EXP_PARAMS, g, 1000.0, exp_odd_grid)
    p0 = ModelParams(1.0, 0.5, 0.0, Exponential(1.0))
    assert exact_mean(p0, g, 1000.0, exp_odd_grid).value == 0.0
    p_neg = ModelParams(1.0, 0.5, -1.0, Exponential(1.0))
    assert exact_mean(p_neg, g, 1000.0, exp_odd_grid).value == -m_plus.value


def test_exact_mean_gap_shrinks_with_T(exp_odd_grid):
    g = smooth_quadrant_bump(4.0)
    results = [exact_mean(EXP_PARAMS, g, T, exp_odd_grid) for T in (1e2, 1e3, 1e4)]
    for res, T in zip(results, (1e2, 1e3, 1e4)):
        assert abs(res.mu_Tg - res.mu_g) <= res.gap_bound
        assert res.gap_bound == pytest.approx(
            2.0 * g.support_radius * g.bound
            * np.abs(exp_odd_grid.values).sum() * exp_odd_grid.spacing**2 / T)
    gaps = [abs(r.mu_Tg - r.mu_g) for r in results]
    assert gaps[0] >= gaps[1] >= gaps[2]


def test_exact_mean_matches_simulation(exp_odd_grid):
    # 500 replicates at theta = +1, T = 500
    T, reps = 500.0, 500
    g = smooth_quadrant_bump(4.0)
    target = exact_mean(EXP_PARAMS, g, T, exp_odd_grid).value
    rng = np.random.default_rng(23)
    vals = np.empty(reps)
    for r in range(reps):
        times = simulate_window_batched(EXP_PARAMS, T, rng)
        vals[r] = contrast_statistic(EventSeries(times, T, {}), g)
    se = vals.std(ddof=1) / math.sqrt(reps)
    assert abs(vals.mean() - target) < 4 * se


# ---------------------------------------------------------------------------
# linearity scan
# ---------------------------------------------------------------------------


def test_linearity_scan_matched_kernel_flat():
    matched = build_matched_kernel(MatchSpec(Exponential(1.0), m=0.5))
    p = ModelParams(1.0, 0.5, 0.0, matched)
    g = smooth_quadrant_bump(3.0)
    scan = linearity_scan(p, g, 300.0, (-1.0, 0.0, 1.0), 80, seed=3)
    assert abs(scan.slope) < 4 * scan.slope_stderr
    assert abs(scan.intercept) < 4 * scan.intercept_stderr


def test_linearity_scan_antisymmetric_in_theta():
    g = smooth_quadrant_bump(4.0)
    scan = linearity_scan(EXP_PARAMS, g, 400.0, (-1.0, 0.0, 1.0), 150, seed=29)
    z = (scan.means[0] + scan.means[2]) / math.hypot(scan.stderrs[0], scan.stderrs[2])
    assert abs(z) < 4.0


def test_linearity_scan_stderr_scaling():
    g = smooth_quadrant_bump(3.0)
    s1 = linearity_scan(EXP_PARAMS, g, 200.0, (-1.0, 0.0, 1.0), 100, seed=7)
    s2 = linearity_scan(EXP_PARAMS, g, 200.0, (-1.0, 0.0, 1.0), 200, seed=7)
    ratio = (s1.stderrs**2).mean() / (s2.stderrs**2).mean()
    assert ratio == pytest.approx(2.0, rel=0.25)


def test_linearity_scan_validation():
    g = smooth_quadrant_bump(3.0)
    with pytest.raises(ValueError):
        linearity_scan(EXP_PARAMS, g, 100.0, (-1.0, 1.0), 10, seed=0)
    with pytest.raises(ValueError):
        linearity_scan(EXP_PARAMS, g, 100.0, (-2.0, 0.0, 1.0), 10, seed=0)
