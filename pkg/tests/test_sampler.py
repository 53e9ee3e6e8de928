import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from jitter_reflect import (
    InvalidConfigError,
    JitterReflectSampler,
    JitterSpec,
    SamplingConfig,
    Schedule,
    baseline_schedule,
    check_u1,
    check_u2,
    generate_schedule,
    init_sampler,
    next_sample,
    reflect,
    validate_config,
)
from jitter_reflect.sampler import (
    SamplerState,
    config_errors,
    iter_offsets,
    jwr_center_offset,
    reflect_offset,
)
from jitter_reflect.seeding import derive_seed, make_rng

from conftest import ScriptedRng, uniform_discrete


# -- validation --------------------------------------------------------------

def test_uniform_discrete_is_valid():
    validate_config(uniform_discrete(10, 3))


def test_gcd_violation_rejected():
    cfg = SamplingConfig(3, 2, "discrete", JitterSpec.discrete({-2: 0.25, 0: 0.5, 2: 0.25}))
    with pytest.raises(InvalidConfigError) as exc:
        validate_config(cfg)
    assert "gcd_condition" in [name for name, _ in exc.value.errors]


def test_asymmetric_density_rejected():
    jit = JitterSpec.piecewise([[-0.1, 0.0, 4.0], [0.0, 0.1, 6.0]])
    errs = config_errors(SamplingConfig(1.0, 0.1, "continuous", jit))
    assert "asymmetric_jitter" in [name for name, _ in errs]


def test_all_mass_at_zero_rejected():
    with pytest.raises(InvalidConfigError):
        validate_config(SamplingConfig(2, 1, "discrete", JitterSpec.discrete({0: 1.0})))


@pytest.mark.parametrize(
    "cfg, name",
    [
        (SamplingConfig(0, 0, "discrete"), "t_range"),
        (SamplingConfig(10, 10, "discrete"), "t_p_range"),
        (SamplingConfig(2.5, 1, "discrete"), "non_integer_discrete"),
        (SamplingConfig(1.0, 0.1, "sideways"), "mode"),
        (SamplingConfig(4, 1, "discrete", JitterSpec.discrete({-2: 0.5, 2: 0.5})), "support_exceeds_t_p"),
        (SamplingConfig(4, 2, "discrete", JitterSpec.discrete({-1: 0.3, 1: 0.3})), "not_normalized"),
    ],
)
def test_config_error_names(cfg, name):
    assert name in [n for n, _ in config_errors(cfg)]


def test_baselines_need_no_jitter_bound():
    assert config_errors(SamplingConfig(10, None, "discrete"), "fixed_rate") == []


def test_config_roundtrip():
    cfg = SamplingConfig(10, 3, "discrete", JitterSpec.discrete({-1: 0.25, 0: 0.5, 1: 0.25}))
    again = SamplingConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


# -- reflection ---------------------------------------------------------------

def test_reflect_upper_continuous():
    assert reflect(2.03, 1, 1.0, "continuous") == pytest.approx(1.97, abs=1e-12)


def test_reflect_passthrough():
    assert reflect(1.5, 1, 1.0, "continuous") == 1.5


def test_reflect_upper_discrete():
    assert reflect(22, 1, 10, "discrete") == 17


def test_reflect_ties_stay_in_range():
    assert reflect_offset(1.0, 1.0, False) == 1.0
    assert reflect_offset(0.0, 1.0, False) == 0.0
    assert reflect_offset(10, 10, True) == 9
    assert reflect_offset(-1, 10, True) == 0


@given(st.integers(1, 40), st.data())
def test_discrete_reflection_closed(t, data):
    b = data.draw(st.integers(0, t - 1))
    v = data.draw(st.integers(-(t - 1), t - 1))
    assert 0 <= reflect_offset(b + v, t, True) <= t - 1


@given(st.floats(0.5, 100), st.floats(0, 1), st.floats(-0.999, 0.999))
def test_continuous_reflection_closed(t, u, w):
    b = u * t
    out = reflect_offset(b + w * t, t, False)
    assert 0.0 <= out <= t


# -- streaming ------------------------------------------------------------------

def test_next_sample_zero_jitter(cont_unit):
    state = SamplerState(0, 0.5, ScriptedRng(0.5))  # u=0.5 -> v=0
    _, a1 = next_sample(cont_unit, state)
    assert a1 == pytest.approx(1.5)


def test_next_sample_upper_reflection(cont_unit):
    state = SamplerState(0, 0.95, ScriptedRng(0.9))  # v = -0.1 + 0.2*0.9 = 0.08
    new, a1 = next_sample(cont_unit, state)
    assert a1 == pytest.approx(1.97, abs=1e-12)
    assert new.i == 1


def test_next_sample_lower_reflection_discrete():
    cfg = uniform_discrete(10, 3)
    state = SamplerState(0, 0, ScriptedRng(0.0))  # lowest support point, v=-3
    _, a1 = next_sample(cfg, state)
    assert a1 == 12


def test_init_deterministic(flip_third):
    assert init_sampler(flip_third, 99).b == init_sampler(flip_third, 99).b


def test_state_is_markov():
    assert set(SamplerState.__dataclass_fields__) == {"i", "b", "rng"}


def test_initial_offset_uniform_over_seeds(cont_unit):
    a0 = np.array([init_sampler(cont_unit, s).b for s in range(100_000)])
    assert stats.kstest(a0, "uniform").pvalue > 0.001


def test_stream_bulk_and_batch_agree(cont_unit):
    sampler = JitterReflectSampler(cont_unit, 7)
    streamed = [next(sampler) for _ in range(300)]
    bulk = generate_schedule(cont_unit, 7, 300).timestamps
    batch = iter_offsets("jwr", cont_unit, 1, make_rng(7))
    offs = [next(batch)[0] for _ in range(300)]
    np.testing.assert_array_equal(streamed, bulk)
    np.testing.assert_allclose(bulk - np.arange(300), offs, rtol=0, atol=1e-12)


def test_batch_matches_bulk_discrete():
    cfg = uniform_discrete(10, 3)
    bulk = generate_schedule(cfg, 8, 1000).timestamps
    batch = iter_offsets("jwr", cfg, 1, make_rng(8))
    offs = [int(next(batch)[0]) for _ in range(1000)]
    assert (bulk - 10 * np.arange(1000)).tolist() == offs


# -- schedules ------------------------------------------------------------------

def test_single_sample_schedule(flip_third):
    s = generate_schedule(flip_third, 3, 1)
    assert len(s) == 1 and s.timestamps[0] in (0, 1)


def test_gaps_t2(flip_third):
    gaps = np.diff(generate_schedule(flip_third, 11, 10_000).timestamps)
    assert set(gaps.tolist()) <= {1, 2, 3}


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.data(), st.booleans(), st.integers(0, 2**63 - 1))
def test_schedules_increase_and_satisfy_u1_u2(t, data, discrete, seed):
    if discrete:
        t_p = data.draw(st.integers(1, t - 1)) if t > 1 else None
        if t_p is None:
            return
        cfg = SamplingConfig(t, t_p, "discrete")
    else:
        t = float(t)
        cfg = SamplingConfig(t, data.draw(st.floats(0.01 * t, 0.99 * t)), "continuous")
    s = generate_schedule(cfg, seed, 10_000)
    assert np.all(np.diff(s.timestamps) > 0)
    assert check_u1(s) == []
    assert check_u2(s, jwr_center_offset(cfg)) == []


def test_million_steps_stay_in_interval(cont_unit, flip_third):
    for cfg in (cont_unit, SamplingConfig(10, 3, "discrete")):
        s = generate_schedule(cfg, 5, 1_000_000)
        b = s.timestamps - np.arange(len(s)) * cfg.t
        assert b.min() >= 0
        assert b.max() <= (cfg.t if not cfg.discrete else cfg.t - 1)


def test_schedule_determinism(cont_unit):
    a = generate_schedule(cont_unit, 1234, 5000).timestamps
    b = generate_schedule(cont_unit, 1234, 5000).timestamps
    c = generate_schedule(cont_unit, 1235, 5000).timestamps
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_schedule_file_roundtrip(tmp_path, cont_unit):
    s = generate_schedule(cont_unit, 1, 100)
    s.save(tmp_path / "s.json")
    back = Schedule.load(tmp_path / "s.json")
    np.testing.assert_allclose(back.timestamps, s.timestamps, rtol=1e-11)
    assert back.config == s.config


# -- baselines --------------------------------------------------------------------

def test_fixed_rate():
    assert baseline_schedule("fixed_rate", 10, 0, 3, "discrete").timestamps.tolist() == [0, 10, 20]


def test_random_offset_constant_gaps():
    s = baseline_schedule("random_offset", 10, 4, 500, "discrete")
    assert set(np.diff(s.timestamps).tolist()) == {10}


def test_iid_gap_range_matches_enumeration():
    # every (offset, next offset) pair is possible: gaps 10 + y - x
    possible = {10 + y - x for x in range(10) for y in range(10)}
    assert possible == set(range(1, 20))
    s = baseline_schedule("iid_per_interval", 10, 4, 100_000, "discrete")
    gaps = set(np.diff(s.timestamps).tolist())
    assert gaps == possible
    assert check_u1(s, t_p=8) != []


# -- property checks ---------------------------------------------------------------

def test_u1_handbuilt():
    s = Schedule(np.array([0.0, 1.0, 4.0]), SamplingConfig(2.0, 0.5, "continuous"))
    assert [v.index for v in check_u1(s)] == [0, 1]


def test_u1_fixed_rate_clean():
    s = baseline_schedule("fixed_rate", 10, 0, 50, "discrete", t_p=1)
    assert check_u1(s) == []


def test_u2_handbuilt():
    t = 2.0
    stamps = np.array([0.5, 2.5, 4.5, 3 * t + 1.2 * t])
    s = Schedule(stamps, SamplingConfig(t, 1.0, "continuous"))
    assert [v.index for v in check_u2(s, t / 2)] == [3]
    ok = Schedule(np.array([0.5, 2.5, 4.5, 3 * t + 0.9 * t]), s.config)
    assert check_u2(ok, t / 2) == []


def test_u2_discrete_center():
    cfg = uniform_discrete(10, 3)
    assert check_u2(generate_schedule(cfg, 2, 20_000), 4.5) == []


def test_derive_seed_stable():
    assert derive_seed(1, "x", 0) == derive_seed(1, "x", 0)
    assert len({derive_seed(1, "x", i) for i in range(1000)}) == 1000
    assert 0 <= derive_seed(2**64 - 1, "y", 5) < 2**64
