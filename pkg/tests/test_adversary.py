import itertools
import math

import numpy as np
import pytest
from statsmodels.stats.proportion import proportion_confint

from jitter_reflect import (
    JitterSpec,
    SamplingConfig,
    build_attack_set,
    estimate_miss_probability,
    exact_miss_dp,
    fit_exponential,
    phase_search_attack,
    run_trial,
    wilson_interval,
)
from jitter_reflect.adversary import exact_miss_curve, simulate_first_hits
from jitter_reflect.analysis import InsufficientDataError

from conftest import uniform_discrete


def periodic(t, phase, intervals, width=1, mode="discrete"):
    return build_attack_set({"kind": "periodic", "period": t, "phase": phase, "width": width}, intervals * t, mode)


# -- attack sets --------------------------------------------------------------------

def test_periodic_points():
    s = build_attack_set({"kind": "periodic", "period": 10, "phase": 0, "width": 1}, 100)
    assert s.points.tolist() == list(range(0, 100, 10))
    assert s.measure() == 10


def test_explicit_dedup():
    s = build_attack_set({"kind": "explicit", "timestamps": [5, 5, 3]}, 10)
    assert s.points.tolist() == [3, 5]


def test_phase_out_of_range():
    with pytest.raises(ValueError):
        build_attack_set({"kind": "periodic", "period": 10, "phase": 10}, 100)


def test_empty_rejected_unless_allowed():
    with pytest.raises(ValueError):
        build_attack_set({"kind": "explicit", "timestamps": []}, 10)
    assert build_attack_set({"kind": "explicit", "timestamps": []}, 10, allow_empty=True).measure() == 0


def test_continuous_intervals_merge():
    s = build_attack_set({"kind": "explicit", "intervals": [[0.5, 1.0], [0.8, 1.5], [3, 4]]}, 10, "continuous")
    assert s.measure() == pytest.approx(2.0)
    assert s.contains(np.array([0.7, 1.5, 3.0])).tolist() == [True, False, True]


# -- trials -----------------------------------------------------------------------------

def test_full_cover_detected(cont_unit):
    s = build_attack_set({"kind": "explicit", "intervals": [[0, 20]]}, 20, "continuous")
    assert run_trial("jwr", cont_unit, s, 3).detected


def test_empty_never_detected(flip_third):
    s = build_attack_set({"kind": "explicit", "timestamps": []}, 20, allow_empty=True)
    assert not run_trial("jwr", flip_third, s, 3).detected


def test_fixed_rate_avoids_phase_five():
    cfg = SamplingConfig(10, None, "discrete")
    for horizon in (10, 100, 10_000):
        s = build_attack_set({"kind": "periodic", "period": 10, "phase": 5}, horizon)
        assert not run_trial("fixed_rate", cfg, s, 0).detected


# -- wilson ---------------------------------------------------------------------------------

@pytest.mark.parametrize("k, n", [(0, 100), (1, 100), (37, 100), (99, 100), (100, 100), (4, 100_000), (5000, 10_000)])
def test_wilson_matches_reference(k, n):
    lo, hi = wilson_interval(k, n)
    ref_lo, ref_hi = proportion_confint(k, n, alpha=0.05, method="wilson")
    assert lo == pytest.approx(ref_lo, abs=1e-12)
    assert hi == pytest.approx(ref_hi, abs=1e-12)


def test_wilson_edges():
    assert wilson_interval(0, 50)[0] == 0.0
    assert wilson_interval(50, 50)[1] == 1.0


# -- exact recursion ------------------------------------------------------------------------------

def brute_force_miss(t, masses, points, n):
    """Enumerate every initial offset and jitter path."""
    pts = set(points)
    total = 0.0
    vs = list(masses.items())
    for b0 in range(t):
        for path in itertools.product(vs, repeat=n - 1):
            prob = 1.0 / t
            b = b0
            hit = b in pts
            for i, (v, p) in enumerate(path, start=1):
                prob *= p
                x = b + v
                b = 2 * t - x - 1 if x >= t else (-x - 1 if x < 0 else x)
                hit = hit or (i * t + b) in pts
            if not hit:
                total += prob
    return total


@pytest.mark.parametrize("seed", range(6))
def test_dp_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    t = int(rng.integers(2, 6))
    t_p = int(rng.integers(1, t))
    w = rng.random(t_p + 1)
    masses = {0: w[0]}
    for v in range(1, t_p + 1):
        masses[v] = masses[-v] = w[v]
    z = sum(masses.values())
    masses = {k: x / z for k, x in masses.items()}
    n = 5
    points = sorted(set(rng.integers(0, n * t, size=n).tolist()))
    cfg = SamplingConfig(t, t_p, "discrete", JitterSpec.discrete(masses))
    attack = build_attack_set({"kind": "explicit", "timestamps": points}, n * t)
    assert exact_miss_dp("jwr", cfg, attack) == pytest.approx(brute_force_miss(t, masses, points, n), abs=1e-14)


def test_dp_t2_closed_form(flip_third):
    # the chain must start at 1 and never flip
    curve = exact_miss_curve("jwr", flip_third, periodic(2, 0, 40))
    m = np.arange(1, 41)
    np.testing.assert_allclose(curve, 0.5 * (2 / 3) ** (m - 1), rtol=1e-12)


def test_dp_full_interval_cover(flip_third):
    s = build_attack_set({"kind": "explicit", "timestamps": [0, 1]}, 20)
    assert exact_miss_curve("jwr", flip_third, s)[0] == 0.0


def test_dp_empty(flip_third):
    s = build_attack_set({"kind": "explicit", "timestamps": []}, 20, allow_empty=True)
    assert exact_miss_dp("jwr", flip_third, s) == 1.0


def test_dp_horizon_limit(flip_third):
    with pytest.raises(ValueError):
        exact_miss_dp("jwr", flip_third, periodic(2, 0, 10), horizon=10**6 + 2)


def test_dp_monotone_in_superset():
    cfg = uniform_discrete(6, 2)
    prev = 1.0
    for width in range(1, 7):
        miss = exact_miss_dp("jwr", cfg, periodic(6, 0, 30, width))
        assert miss <= prev + 1e-15
        prev = miss
    assert prev == 0.0


def test_random_offset_all_or_nothing():
    cfg = SamplingConfig(10, None, "discrete")
    for phi in range(10):
        attack = periodic(10, phi, 20)
        curve = exact_miss_curve("random_offset", cfg, attack)
        np.testing.assert_allclose(curve, 0.9)
        for seed in range(20):
            out = run_trial("random_offset", cfg, attack, seed)
            drawn = run_trial("random_offset", cfg, build_attack_set({"kind": "periodic", "period": 10, "phase": 0, "width": 10}, 200), seed).first_hit
            assert out.detected == (drawn == phi)


# -- monte carlo ----------------------------------------------------------------------------

def test_full_coverage_miss_zero(flip_third):
    s = build_attack_set({"kind": "periodic", "period": 2, "phase": 0, "width": 2}, 20)
    curve = estimate_miss_probability("jwr", flip_third, s, 1000, 1)
    assert all(p.misses == 0 for p in curve.points)


def test_monte_carlo_matches_dp(flip_third):
    attack = periodic(2, 0, 40)
    curve = estimate_miss_probability("jwr", flip_third, attack, 100_000, 42, [2 * m for m in range(5, 45, 5)], exact=True)
    for p in curve.points:
        assert p.wilson_lo <= p.exact <= p.wilson_hi
    assert curve.fit.r2 > 0.95 and curve.fit.slope < 0


def test_trials_floor(flip_third):
    with pytest.raises(ValueError):
        estimate_miss_probability("jwr", flip_third, periodic(2, 0, 10), 99, 1)


def test_parallel_equals_sequential(flip_third):
    attack = periodic(2, 0, 30)
    seq = simulate_first_hits("jwr", flip_third, attack, 20_000, 5, block_size=1024)
    par = simulate_first_hits("jwr", flip_third, attack, 20_000, 5, block_size=1024, max_workers=4)
    np.testing.assert_array_equal(seq, par)


def test_more_trials_keep_earlier_ones(flip_third):
    attack = periodic(2, 0, 30)
    small = simulate_first_hits("jwr", flip_third, attack, 5000, 5)
    big = simulate_first_hits("jwr", flip_third, attack, 20_000, 5)
    np.testing.assert_array_equal(big[:5000], small)


# -- fits ----------------------------------------------------------------------------------

def test_fit_exact_exponential():
    mu = np.arange(1, 11, dtype=float)
    fit = fit_exponential(mu, np.exp(-0.3 * mu))
    assert fit.slope == pytest.approx(-0.3, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_constant_flagged():
    assert fit_exponential([1, 2, 3, 4], [1, 1, 1, 1]).flag == "no decay"


def test_fit_excludes_zeros():
    fit = fit_exponential([1, 2, 3, 4, 5, 6], [0.5, 0.25, 0.125, 0.0625, 0, 0])
    assert fit.n_excluded == 2 and fit.n_used == 4


def test_fit_needs_four_points():
    with pytest.raises(InsufficientDataError):
        fit_exponential([1, 2, 3], [0.5, 0.2, 0.1])


# -- phase search -----------------------------------------------------------------------------

def test_phase_search_fixed_rate():
    cfg = SamplingConfig(10, None, "discrete")
    assert phase_search_attack("fixed_rate", cfg, 1, 50).evasion_rate == 1.0


def test_phase_search_random_offset_enumeration():
    cfg = SamplingConfig(10, None, "discrete")
    # blind: any phase collides with one of ten equally likely offsets
    assert phase_search_attack("random_offset", cfg, 0, 50).evasion_rate == pytest.approx(0.9)
    for budget in (1, 2, 10):
        res = phase_search_attack("random_offset", cfg, budget, 50, trials=2000, seed=3)
        assert res.evasion_rate == pytest.approx(1.0)
        assert res.simulated == 1.0


def test_phase_search_jwr_decays(flip_third):
    rates = [phase_search_attack("jwr", flip_third, 1, n).evasion_rate for n in range(5, 45, 5)]
    fit = fit_exponential(np.arange(5, 45, 5), rates)
    assert fit.slope < 0 and fit.r2 > 0.99


def test_phase_search_replay_agrees(flip_third):
    res = phase_search_attack("jwr", flip_third, 2, 10, trials=100_000, seed=9)
    lo, hi = res.simulated_interval
    assert lo <= res.evasion_rate <= hi
